#include "wfrflow/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "text_util.hpp"
#include "wfrflow/error.hpp"

namespace wfrflow {

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

TransitionPrior identity_prior(const SnapshotTable& table) {
  TransitionPrior prior;
  for (int l = 0; l < table.label_levels(); ++l) {
    std::vector<std::string> names = table.labels[l];
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    std::vector<std::pair<std::string, std::string>> allowed;
    for (const auto& n : names) allowed.emplace_back(n, n);
    prior.set_level(l + 1, std::move(allowed));
  }
  return prior;
}

SnapshotTable empty_table(Index rows, int dim, int levels) {
  SnapshotTable t;
  t.x = PointMatrix(rows, dim);
  t.t.assign(static_cast<std::size_t>(rows), 0.0);
  t.labels.assign(static_cast<std::size_t>(levels), std::vector<std::string>(static_cast<std::size_t>(rows)));
  t.w = Vec::Ones(rows);
  return t;
}

}  // namespace

std::vector<double> SnapshotTable::time_points() const {
  std::vector<double> out = t;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<Index> SnapshotTable::rows_at(std::size_t k) const {
  const auto times = time_points();
  if (k >= times.size()) throw InvalidArgument("time index " + std::to_string(k) + " out of range");
  std::vector<Index> out;
  for (std::size_t r = 0; r < t.size(); ++r)
    if (t[r] == times[k]) out.push_back(static_cast<Index>(r));
  return out;
}

void SnapshotTable::validate() const {
  const auto n = static_cast<std::size_t>(x.rows());
  if (t.size() != n || static_cast<std::size_t>(w.size()) != n)
    throw InvalidArgument("snapshot table columns have different lengths");
  for (const auto& level : labels) {
    if (level.size() != n) throw InvalidArgument("label column length does not match the table");
    for (std::size_t r = 0; r < n; ++r)
      if (level[r].empty()) throw InvalidArgument("row " + std::to_string(r) + " is missing a label");
  }
  if (!x.allFinite()) throw InvalidArgument("snapshot coordinates must be finite");
  for (std::size_t r = 0; r < n; ++r) {
    if (!std::isfinite(t[r])) throw InvalidArgument("snapshot times must be finite");
    if (!(w[static_cast<Eigen::Index>(r)] >= 0.0) || !std::isfinite(w[static_cast<Eigen::Index>(r)]))
      throw InvalidArgument("snapshot weights must be non-negative and finite");
  }
}

Snapshot snapshot_at(const SnapshotTable& table, std::size_t k) {
  Snapshot s;
  s.time = table.time_points().at(k);
  s.rows = table.rows_at(k);
  const auto n = static_cast<Index>(s.rows.size());
  s.measure.points = PointMatrix(n, table.dim());
  s.measure.weights = Vec(n);
  s.labels.assign(table.labels.size(), std::vector<std::string>(s.rows.size()));
  for (Index i = 0; i < n; ++i) {
    const Index r = s.rows[i];
    s.measure.points.row(i) = table.x.row(r);
    s.measure.weights[i] = table.w[r];
    for (std::size_t l = 0; l < table.labels.size(); ++l) s.labels[l][i] = table.labels[l][r];
  }
  return s;
}

SnapshotTable concat_tables(const std::vector<SnapshotTable>& parts) {
  if (parts.empty()) return {};
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.dim() != parts[0].dim() || p.label_levels() != parts[0].label_levels())
      throw InvalidArgument("cannot concatenate tables of different shapes");
    rows += p.rows();
  }
  SnapshotTable out = empty_table(rows, parts[0].dim(), parts[0].label_levels());
  Index at = 0;
  for (const auto& p : parts) {
    out.x.middleRows(at, p.rows()) = p.x;
    out.w.segment(at, p.rows()) = p.w;
    for (Index r = 0; r < p.rows(); ++r) {
      out.t[at + r] = p.t[r];
      for (int l = 0; l < p.label_levels(); ++l) out.labels[l][at + r] = p.labels[l][r];
    }
    at += p.rows();
  }
  return out;
}

std::map<std::pair<double, std::string>, std::size_t> row_counts(const SnapshotTable& table) {
  std::map<std::pair<double, std::string>, std::size_t> out;
  for (Index r = 0; r < table.rows(); ++r)
    ++out[{table.t[r], table.label_levels() > 0 ? table.labels[0][r] : std::string()}];
  return out;
}

std::pair<double, double> micro_center(const SyntheticSpec& spec, int macro, int micro) {
  const auto& o = spec.micro_offsets.at(static_cast<std::size_t>(micro));
  return {spec.anchor_a + o.first, spec.anchor_b + spec.macro_offsets.at(static_cast<std::size_t>(macro)) + o.second};
}

MultiscaleDataset generate_multiscale(const SyntheticSpec& spec) {
  if (spec.per_micro < 1) throw InvalidArgument("per-micro count must be at least 1");
  if (!(spec.sigma > 0.0)) throw InvalidArgument("generation noise must be positive");
  const int M = static_cast<int>(spec.macro_offsets.size());
  const int R = static_cast<int>(spec.micro_offsets.size());
  const Index n = static_cast<Index>(M) * R * spec.per_micro;
  SnapshotTable table = empty_table(2 * n, 2, 2);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.sigma);
  Index row = 0;
  for (int m = 0; m < M; ++m)
    for (int r = 0; r < R; ++r) {
      const auto [cx, cy] = micro_center(spec, m, r);
      for (int k = 0; k < spec.per_micro; ++k, ++row) {
        const double px = cx + noise(rng);
        const double py = cy + noise(rng);
        for (const Index at : {row, row + n}) {
          table.labels[0][at] = std::to_string(m);
          table.labels[1][at] = std::to_string(m * R + r);
        }
        table.x(row, 0) = px;
        table.x(row, 1) = py;
        table.x(row + n, 0) = px + spec.translation.first;
        table.x(row + n, 1) = py + spec.translation.second;
        table.t[row + n] = 1.0;
      }
    }
  MultiscaleDataset out;
  out.truth.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out.truth[i] = i;
  out.prior = identity_prior(table);
  out.table = std::move(table);
  return out;
}

UnbalancedToySpec default_unbalanced_toy() {
  UnbalancedToySpec spec;
  spec.components = {{{0.0, 0.0}, {1.0, 0.0}, 0.2, 150, 150}, {{0.0, 2.5}, {1.0, 2.5}, 0.2, 150, 300}};
  return spec;
}

UnbalancedToy generate_unbalanced_toy(const UnbalancedToySpec& spec) {
  if (spec.components.empty()) throw InvalidArgument("toy needs at least one component");
  const std::size_t D = spec.components[0].mean0.size();
  Index rows = 0;
  for (const auto& c : spec.components) {
    if (c.mean0.size() != D || c.mean1.size() != D || D == 0)
      throw InvalidArgument("toy component means must share one dimension");
    if (c.count0 < 1 || c.count1 < 1 || !(c.sigma >= 0.0))
      throw InvalidArgument("toy components need positive counts and non-negative spread");
    rows += c.count0 + c.count1;
  }
  UnbalancedToy out;
  out.table = empty_table(rows, static_cast<int>(D), 1);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Index row = 0;
  for (int time = 0; time < 2; ++time)
    for (std::size_t c = 0; c < spec.components.size(); ++c) {
      const auto& comp = spec.components[c];
      const auto& mean = time == 0 ? comp.mean0 : comp.mean1;
      const int count = time == 0 ? comp.count0 : comp.count1;
      for (int k = 0; k < count; ++k, ++row) {
        for (std::size_t d = 0; d < D; ++d) out.table.x(row, static_cast<Index>(d)) = mean[d] + comp.sigma * z(rng);
        out.table.t[row] = time;
        out.table.labels[0][row] = std::to_string(c);
      }
    }
  for (const auto& c : spec.components) out.mass_ratio.push_back(static_cast<double>(c.count1) / c.count0);
  out.prior = identity_prior(out.table);
  return out;
}

CrossingToy generate_crossing_toy(const CrossingSpec& spec) {
  if (spec.per_branch < 1 || !(spec.sigma >= 0.0)) throw InvalidArgument("invalid crossing toy spec");
  const Index n = 2 * static_cast<Index>(spec.per_branch);
  CrossingToy out;
  out.table = empty_table(3 * n, 2, 1);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> z(0.0, spec.sigma);
  const double half = spec.separation / 2.0;
  Index i = 0;
  for (int b = 0; b < 2; ++b) {
    const double y0 = b == 0 ? half : -half;
    for (int k = 0; k < spec.per_branch; ++k, ++i) {
      const double px = z(rng);
      const double py = y0 + z(rng);
      for (int time = 0; time < 3; ++time) {
        const Index row = time * n + i;
        const double s = time / 2.0;
        out.table.x(row, 0) = px + s * spec.length;
        out.table.x(row, 1) = py - s * 2.0 * y0;
        out.table.t[row] = time;
        out.table.labels[0][row] = std::to_string(b);
      }
    }
  }
  out.prior = identity_prior(out.table);
  return out;
}

TranslationSeries generate_translation_series(const TranslationSeriesSpec& spec) {
  if (spec.clusters < 1 || spec.per_cluster < 1 || spec.times.size() < 2)
    throw InvalidArgument("invalid translation series spec");
  const Index n = static_cast<Index>(spec.clusters) * spec.per_cluster;
  const auto T = static_cast<Index>(spec.times.size());
  TranslationSeries out;
  out.table = empty_table(T * n, 2, 1);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> z(0.0, spec.sigma);
  Index i = 0;
  for (int c = 0; c < spec.clusters; ++c)
    for (int k = 0; k < spec.per_cluster; ++k, ++i) {
      const double px = z(rng);
      const double py = 3.0 * c + z(rng);
      for (Index s = 0; s < T; ++s) {
        const double t = spec.times[static_cast<std::size_t>(s)];
        out.table.x(s * n + i, 0) = px + t * spec.velocity.first;
        out.table.x(s * n + i, 1) = py + t * spec.velocity.second;
        out.table.t[s * n + i] = t;
        out.table.labels[0][s * n + i] = std::to_string(c);
      }
    }
  out.prior = identity_prior(out.table);
  return out;
}

void write_snapshots(std::ostream& out, const SnapshotTable& table) {
  table.validate();
  for (int d = 0; d < table.dim(); ++d) out << 'x' << d << ',';
  out << 't';
  for (int l = 0; l < table.label_levels(); ++l) out << ",l" << (l + 1);
  out << ",w\n";
  for (Index r = 0; r < table.rows(); ++r) {
    for (int d = 0; d < table.dim(); ++d) out << format_double(table.x(r, d)) << ',';
    out << format_double(table.t[r]);
    for (int l = 0; l < table.label_levels(); ++l) out << ',' << table.labels[l][r];
    out << ',' << format_double(table.w[r]) << '\n';
  }
}

void save_snapshots(const std::string& path, const SnapshotTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write snapshot table " + path);
  write_snapshots(out, table);
  if (!out) throw IoError("failed writing snapshot table " + path);
}

SnapshotTable read_snapshots(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("snapshot table is empty", 1);
  const auto header = detail::split(line, ',');
  int dim = 0, levels = 0;
  std::vector<int> coord_col, label_col;
  int t_col = -1, w_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    auto index_of = [&](std::size_t skip) -> int {
      int v = -1;
      const auto r = std::from_chars(h.data() + skip, h.data() + h.size(), v);
      if (r.ec != std::errc() || r.ptr != h.data() + h.size() || v < 0)
        throw ParseError("bad column name '" + h + "'", 1);
      return v;
    };
    if (h == "t") {
      t_col = static_cast<int>(c);
    } else if (h == "w") {
      w_col = static_cast<int>(c);
    } else if (h.size() > 1 && h[0] == 'x') {
      const int k = index_of(1);
      if (k >= static_cast<int>(coord_col.size())) coord_col.resize(k + 1, -1);
      coord_col[k] = static_cast<int>(c);
    } else if (h.size() > 1 && h[0] == 'l') {
      const int k = index_of(1);
      if (k < 1) throw ParseError("label columns start at l1", 1);
      if (k > static_cast<int>(label_col.size())) label_col.resize(k, -1);
      label_col[k - 1] = static_cast<int>(c);
    } else {
      throw ParseError("unknown column '" + h + "'", 1);
    }
  }
  if (t_col < 0) throw ParseError("missing time column 't'", 1);
  for (std::size_t k = 0; k < coord_col.size(); ++k)
    if (coord_col[k] < 0) throw ParseError("missing coordinate column x" + std::to_string(k), 1);
  for (std::size_t k = 0; k < label_col.size(); ++k)
    if (label_col[k] < 0) throw ParseError("missing label column l" + std::to_string(k + 1), 1);
  dim = static_cast<int>(coord_col.size());
  levels = static_cast<int>(label_col.size());
  if (dim == 0) throw ParseError("no coordinate columns", 1);

  std::vector<double> xs, ts, ws;
  std::vector<std::vector<std::string>> labels(static_cast<std::size_t>(levels));
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()),
                       lineno);
    auto number = [&](int col) {
      const auto v = detail::parse_double(fields[static_cast<std::size_t>(col)]);
      if (!v || !std::isfinite(*v)) throw ParseError("bad number '" + fields[static_cast<std::size_t>(col)] + "'", lineno);
      return *v;
    };
    for (int c : coord_col) xs.push_back(number(c));
    ts.push_back(number(t_col));
    ws.push_back(w_col >= 0 ? number(w_col) : 1.0);
    if (ws.back() < 0.0) throw ParseError("negative weight", lineno);
    for (int l = 0; l < levels; ++l) {
      const std::string& v = fields[static_cast<std::size_t>(label_col[l])];
      if (v.empty()) throw ParseError("missing label l" + std::to_string(l + 1), lineno);
      labels[l].push_back(v);
    }
  }
  const auto rows = static_cast<Index>(ts.size());
  SnapshotTable table;
  table.x = Eigen::Map<const PointMatrix>(xs.data(), rows, dim);
  table.t = std::move(ts);
  table.w = Eigen::Map<const Vec>(ws.data(), rows);
  table.labels = std::move(labels);
  return table;
}

SnapshotTable load_snapshots(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read snapshot table " + path);
  return read_snapshots(in);
}

void save_pairing(const std::string& path, const std::vector<Index>& truth) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pairing " + path);
  out << "source,target\n";
  for (std::size_t i = 0; i < truth.size(); ++i) out << i << ',' << truth[i] << '\n';
}

std::vector<Index> load_pairing(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read pairing " + path);
  std::string line;
  std::getline(in, line);
  if (detail::trim(line) != "source,target") throw ParseError("pairing header must be 'source,target'", 1);
  std::vector<Index> truth;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    Index s = -1, t = -1;
    if (f.size() != 2 || std::from_chars(f[0].data(), f[0].data() + f[0].size(), s).ec != std::errc() ||
        std::from_chars(f[1].data(), f[1].data() + f[1].size(), t).ec != std::errc() || s < 0 || t < 0)
      throw ParseError("malformed pairing line", lineno);
    if (s != static_cast<Index>(truth.size())) throw ParseError("pairing sources must be listed in order", lineno);
    truth.push_back(t);
  }
  return truth;
}

}  // namespace wfrflow
