#include "wfrflow/hierarchy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <unordered_map>

#include "text_util.hpp"
#include "wfrflow/error.hpp"

namespace wfrflow {

namespace {

bool parse_integer(const std::string& s, long long& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

// Sorted distinct labels; numeric order when every label is an integer.
std::vector<std::string> ordered_labels(const std::vector<std::string>& column) {
  std::vector<std::string> names(column.begin(), column.end());
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  bool numeric = true;
  std::vector<long long> keys(names.size());
  for (std::size_t k = 0; k < names.size() && numeric; ++k) numeric = parse_integer(names[k], keys[k]);
  if (numeric) {
    std::vector<std::size_t> order(names.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
    std::vector<std::string> sorted;
    for (auto k : order) sorted.push_back(names[k]);
    names = std::move(sorted);
  }
  return names;
}

void fill_statistics(const DiscreteMeasure& m, HierarchyLevel& level) {
  const Index K = level.size();
  const int D = m.dim();
  level.centroids = PointMatrix::Zero(K, D);
  level.weights = Vec::Zero(K);
  PointMatrix plain = PointMatrix::Zero(K, D);
  std::vector<Index> count(K, 0);
  for (Index p = 0; p < m.size(); ++p) {
    const Index c = level.assignment[p];
    level.centroids.row(c) += m.weights[p] * m.points.row(p);
    level.weights[c] += m.weights[p];
    plain.row(c) += m.points.row(p);
    ++count[c];
  }
  for (Index c = 0; c < K; ++c) {
    if (level.weights[c] > 0.0)
      level.centroids.row(c) /= level.weights[c];
    else
      level.centroids.row(c) = plain.row(c) / std::max<Index>(count[c], 1);
  }
}

}  // namespace

void DiscreteMeasure::validate() const {
  if (weights.size() != points.rows()) throw InvalidArgument("measure has mismatched point and weight counts");
  bool positive = false;
  for (Index i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i]))
      throw InvalidArgument("measure weights must be finite and non-negative");
    positive = positive || weights[i] > 0.0;
  }
  if (!positive) throw InvalidArgument("measure needs at least one positive weight");
  if (!points.allFinite()) throw InvalidArgument("measure coordinates must be finite");
}

std::optional<Index> HierarchyLevel::find(const std::string& name) const {
  for (Index k = 0; k < size(); ++k)
    if (names[k] == name) return k;
  return std::nullopt;
}

HierarchyView build_hierarchy(const DiscreteMeasure& measure, const std::vector<std::vector<std::string>>& labels) {
  measure.validate();
  const Index N = measure.size();
  std::vector<HierarchyLevel> levels;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const auto& column = labels[k];
    if (static_cast<Index>(column.size()) != N)
      throw InvalidArgument("label column " + std::to_string(k + 1) + " has the wrong length");
    HierarchyLevel level;
    level.names = ordered_labels(column);
    std::unordered_map<std::string, Index> id;
    for (Index c = 0; c < level.size(); ++c) id.emplace(level.names[c], c);
    level.assignment.resize(N);
    for (Index p = 0; p < N; ++p) level.assignment[p] = id.at(column[p]);
    if (k > 0) {
      const auto& above = levels.back();
      level.parent.assign(level.size(), -1);
      for (Index p = 0; p < N; ++p) {
        Index& pa = level.parent[level.assignment[p]];
        const Index want = above.assignment[p];
        if (pa < 0)
          pa = want;
        else if (pa != want)
          throw InvalidArgument("inconsistent nesting: level-" + std::to_string(k + 1) + " cluster '" +
                                level.names[level.assignment[p]] + "' spans several level-" + std::to_string(k) +
                                " clusters");
      }
    }
    fill_statistics(measure, level);
    levels.push_back(std::move(level));
  }
  HierarchyLevel finest;
  finest.names.resize(N);
  finest.assignment.resize(N);
  for (Index p = 0; p < N; ++p) {
    finest.names[p] = std::to_string(p);
    finest.assignment[p] = p;
  }
  finest.centroids = measure.points;
  finest.weights = measure.weights;
  if (!levels.empty()) finest.parent = levels.back().assignment;
  levels.push_back(std::move(finest));
  for (std::size_t l = 0; l + 1 < levels.size(); ++l) {
    auto& up = levels[l];
    up.children.assign(up.size(), {});
    const auto& down = levels[l + 1];
    for (Index c = 0; c < down.size(); ++c) up.children[down.parent[c]].push_back(c);
  }
  return HierarchyView(measure, std::move(levels));
}

std::vector<std::vector<std::string>> kmeans_labels(const DiscreteMeasure& measure,
                                                    const std::vector<int>& clusters_per_level, std::uint64_t seed) {
  measure.validate();
  const Index N = measure.size();
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::string>> out;
  std::vector<Index> group(N, 0);  // cluster id at the previous level
  Index groups = 1;
  for (std::size_t lvl = 0; lvl < clusters_per_level.size(); ++lvl) {
    const int k = clusters_per_level[lvl];
    if (k < 1) throw InvalidArgument("k-means cluster count must be >= 1");
    std::vector<Index> next(N, 0);
    for (Index gid = 0; gid < groups; ++gid) {
      std::vector<Index> members;
      for (Index p = 0; p < N; ++p)
        if (group[p] == gid) members.push_back(p);
      const int kk = std::min<int>(k, static_cast<int>(members.size()));
      if (kk == 0) continue;
      // k-means++ seeding on weights (uniform when all member weights vanish).
      std::vector<Index> centers;
      std::vector<double> d2(members.size(), std::numeric_limits<double>::infinity());
      auto pick = [&](const std::vector<double>& w) {
        double total = 0.0;
        for (double x : w) total += x;
        if (!(total > 0.0)) return static_cast<std::size_t>(rng() % w.size());
        double u = std::uniform_real_distribution<double>(0.0, total)(rng);
        for (std::size_t q = 0; q < w.size(); ++q) {
          u -= w[q];
          if (u <= 0.0) return q;
        }
        return w.size() - 1;
      };
      std::vector<double> base(members.size());
      for (std::size_t q = 0; q < members.size(); ++q) base[q] = measure.weights[members[q]];
      PointMatrix C(kk, measure.dim());
      for (int c = 0; c < kk; ++c) {
        std::vector<double> w(members.size());
        for (std::size_t q = 0; q < members.size(); ++q) w[q] = c == 0 ? base[q] : base[q] * d2[q];
        const std::size_t chosen = pick(w);
        C.row(c) = measure.points.row(members[chosen]);
        for (std::size_t q = 0; q < members.size(); ++q)
          d2[q] = std::min(d2[q], (measure.points.row(members[q]) - C.row(c)).squaredNorm());
      }
      std::vector<int> assign(members.size(), 0);
      for (int iter = 0; iter < 50; ++iter) {
        for (std::size_t q = 0; q < members.size(); ++q) {
          double best = std::numeric_limits<double>::infinity();
          for (int c = 0; c < kk; ++c) {
            const double d = (measure.points.row(members[q]) - C.row(c)).squaredNorm();
            if (d < best) best = d, assign[q] = c;
          }
        }
        PointMatrix acc = PointMatrix::Zero(kk, measure.dim());
        std::vector<double> mass(kk, 0.0);
        for (std::size_t q = 0; q < members.size(); ++q) {
          const double w = base[q] > 0.0 ? base[q] : 1e-300;
          acc.row(assign[q]) += w * measure.points.row(members[q]);
          mass[assign[q]] += w;
        }
        for (int c = 0; c < kk; ++c)
          if (mass[c] > 0.0) C.row(c) = acc.row(c) / mass[c];
      }
      for (std::size_t q = 0; q < members.size(); ++q) next[members[q]] = gid * k + assign[q];
    }
    // Compact ids so labels are dense.
    std::vector<Index> remap(static_cast<std::size_t>(groups) * k, -1);
    Index used = 0;
    for (Index p = 0; p < N; ++p)
      if (remap[next[p]] < 0) remap[next[p]] = -2;
    for (auto& r : remap)
      if (r == -2) r = used++;
    std::vector<std::string> column(N);
    for (Index p = 0; p < N; ++p) {
      group[p] = remap[next[p]];
      column[p] = std::to_string(group[p]);
    }
    groups = used;
    out.push_back(std::move(column));
  }
  return out;
}

void TransitionPrior::set_level(int level, std::vector<std::pair<std::string, std::string>> allowed) {
  if (level < 1) throw InvalidArgument("prior levels start at 1");
  levels_[level] = std::move(allowed);
}

std::optional<SupportMask> TransitionPrior::mask_for(int level, const HierarchyView& source,
                                                     const HierarchyView& target) const {
  auto it = levels_.find(level);
  if (it == levels_.end()) return std::nullopt;
  if (level >= source.num_levels() || level >= target.num_levels())
    throw InvalidArgument("prior level " + std::to_string(level) + " exceeds the label levels");
  const auto& src = source.level(level);
  const auto& tgt = target.level(level);
  std::unordered_map<std::string, Index> sid, tid;
  for (Index c = 0; c < src.size(); ++c) sid.emplace(src.names[c], c);
  for (Index c = 0; c < tgt.size(); ++c) tid.emplace(tgt.names[c], c);
  std::vector<IndexPair> allowed;
  for (const auto& [a, b] : it->second) {
    auto ia = sid.find(a);
    auto ib = tid.find(b);
    if (ia != sid.end() && ib != tid.end()) allowed.push_back({ia->second, ib->second});
  }
  return SupportMask(src.size(), tgt.size(), std::move(allowed));
}

TransitionPrior read_prior(std::istream& in) {
  TransitionPrior prior;
  std::string raw;
  std::size_t lineno = 0;
  int current = 0;
  std::map<int, std::vector<std::pair<std::string, std::string>>> sections;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    std::istringstream ls{std::string(line)};
    std::string a, b, extra;
    ls >> a >> b;
    if (b.empty() || (ls >> extra)) throw ParseError("expected 'level <l>' or '<source> <target>'", lineno);
    if (a == "level") {
      long long l = 0;
      if (!parse_integer(b, l) || l < 1) throw ParseError("level must be a positive integer", lineno);
      current = static_cast<int>(l);
      sections[current];
      continue;
    }
    if (current == 0) throw ParseError("transition listed before any 'level' line", lineno);
    sections[current].emplace_back(a, b);
  }
  for (auto& [l, pairs] : sections) prior.set_level(l, std::move(pairs));
  return prior;
}

TransitionPrior read_prior_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open prior file: " + path);
  return read_prior(in);
}

void write_prior(std::ostream& out, const TransitionPrior& prior) {
  for (const auto& [l, pairs] : prior.levels()) {
    out << "level " << l << '\n';
    for (const auto& [a, b] : pairs) out << a << ' ' << b << '\n';
  }
}

void write_prior_file(const std::string& path, const TransitionPrior& prior) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_prior(out, prior);
}

SupportMask build_mask(const std::optional<SupportMask>& prior, const SparseCoupling* parent_coupling,
                       const Vec& parent_weights0, const std::vector<Index>& parent0,
                       const std::vector<Index>& parent1, Index rows, Index cols, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("mask threshold epsilon must lie in (0, 1)");
  if (prior && (prior->rows() != rows || prior->cols() != cols))
    throw InvalidArgument("prior shape does not match the level's cluster counts");
  if (!parent_coupling) return prior ? *prior : SupportMask::full(rows, cols);

  if (static_cast<Index>(parent0.size()) != rows || static_cast<Index>(parent1.size()) != cols)
    throw InvalidArgument("parent maps do not match the level's cluster counts");
  if (parent_weights0.size() != parent_coupling->rows())
    throw InvalidArgument("parent weights do not match the parent coupling");
  for (Index p : parent0)
    if (p < 0 || p >= parent_coupling->rows()) throw InvalidArgument("source parent index out of range");
  for (Index p : parent1)
    if (p < 0 || p >= parent_coupling->cols()) throw InvalidArgument("target parent index out of range");

  auto passes = [&](double value, Index I) {
    return parent_weights0[I] > 0.0 && value / parent_weights0[I] >= epsilon;
  };
  std::vector<IndexPair> allowed;
  if (prior) {
    for (const auto& p : prior->allowed()) {
      const Index I = parent0[p.row], J = parent1[p.col];
      if (passes(parent_coupling->value_at(I, J), I)) allowed.push_back(p);
    }
  } else {
    std::vector<std::vector<Index>> kids0(parent_coupling->rows()), kids1(parent_coupling->cols());
    for (Index i = 0; i < rows; ++i) kids0[parent0[i]].push_back(i);
    for (Index j = 0; j < cols; ++j) kids1[parent1[j]].push_back(j);
    for (const auto& t : parent_coupling->entries()) {
      if (!passes(t.value, t.row)) continue;
      for (Index i : kids0[t.row])
        for (Index j : kids1[t.col]) allowed.push_back({i, j});
    }
  }
  return SupportMask(rows, cols, std::move(allowed));
}

FinestMode parse_finest_mode(const std::string& name) {
  if (name == "sparse") return FinestMode::Sparse;
  if (name == "independent") return FinestMode::Independent;
  throw InvalidArgument("unknown finest mode '" + name + "' (expected sparse or independent)");
}

const char* to_string(FinestMode m) { return m == FinestMode::Sparse ? "sparse" : "independent"; }

double MultiscaleConfig::epsilon_for(int level) const {
  if (epsilon.empty()) return 1e-3;
  const auto k = static_cast<std::size_t>(std::max(level - 2, 0));
  return epsilon[std::min(k, epsilon.size() - 1)];
}

MultiscaleResult solve_multiscale(const HierarchyView& source, const HierarchyView& target,
                                  const TransitionPrior& prior, const MultiscaleConfig& config) {
  const int L = source.num_levels();
  if (L != target.num_levels()) throw InvalidArgument("source and target hierarchies have different depths");
  if (source.measure().dim() != target.measure().dim()) throw InvalidArgument("source and target dimensions differ");
  if (config.finest_mode == FinestMode::Independent && L < 2)
    throw InvalidArgument("independent mode needs at least one label level");
  const int last = config.finest_mode == FinestMode::Sparse ? L : L - 1;

  MultiscaleResult result;
  for (int l = 1; l <= last; ++l) {
    const auto& src = source.level(l);
    const auto& tgt = target.level(l);
    const auto B = l < L ? prior.mask_for(l, source, target) : std::nullopt;
    const SparseCoupling* parent = l > 1 ? &result.couplings.back() : nullptr;
    const Vec parent_w0 = l > 1 ? source.level(l - 1).weights : Vec();
    const auto mask = build_mask(B, parent, parent_w0, src.parent, tgt.parent, src.size(), tgt.size(),
                                 config.epsilon_for(l));
    if (mask.empty()) throw EmptySupportError("level " + std::to_string(l) + ": every transition is masked");
    const auto cost = build_cost(src.centroids, tgt.centroids, mask, config.delta, config.solver.threads);
    LevelReport report;
    report.level = l;
    report.mask_size = mask.size();
    try {
      result.couplings.push_back(solve_masked_oet(cost, src.weights, tgt.weights, mask, config.solver, &report.stats));
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("level " + std::to_string(l) + ": " + e.what(), e.residual());
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("level " + std::to_string(l) + ": " + e.what());
    }
    result.reports.push_back(report);
  }
  return result;
}

SparseCoupling lift_coupling(const SparseCoupling& parent, const HierarchyView& source, const HierarchyView& target) {
  const int L = source.num_levels();
  if (L < 2 || target.num_levels() != L) throw InvalidArgument("lifting needs matching hierarchies with L >= 2");
  const auto& P0 = source.level(L - 1);
  const auto& P1 = target.level(L - 1);
  if (parent.rows() != P0.size() || parent.cols() != P1.size())
    throw InvalidArgument("parent coupling shape does not match level L-1");
  const auto& C0 = P0.children;
  const auto& C1 = P1.children;
  const Vec& w0 = source.level(L).weights;
  const Vec& w1 = target.level(L).weights;
  std::vector<Triplet> out;
  for (const auto& t : parent.entries()) {
    if (!(P0.weights[t.row] > 0.0) || !(P1.weights[t.col] > 0.0)) continue;
    for (Index i : C0[t.row]) {
      const double a = w0[i] / P0.weights[t.row];
      for (Index j : C1[t.col]) {
        const double v = t.value * a * (w1[j] / P1.weights[t.col]);
        if (v > 0.0) out.push_back({i, j, v});
      }
    }
  }
  return SparseCoupling(source.level(L).size(), target.level(L).size(), std::move(out));
}

}  // namespace wfrflow
