#include "wfrflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>

#include "wfrflow/error.hpp"
#include "wfrflow/transport.hpp"

namespace wfrflow {

namespace {

// Efraimidis-Spirakis: keep the `keep` largest u^(1/w).
DiscreteMeasure subsample(const DiscreteMeasure& m, Index keep, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<double, Index>> keys;
  for (Index i = 0; i < m.size(); ++i)
    if (m.weights[i] > 0.0) keys.emplace_back(std::log(u(rng)) / m.weights[i], i);
  keep = std::min<Index>(keep, static_cast<Index>(keys.size()));
  std::partial_sort(keys.begin(), keys.begin() + keep, keys.end(),
                    [](const auto& x, const auto& y) { return x.first > y.first || (x.first == y.first && x.second < y.second); });
  DiscreteMeasure out;
  out.points = PointMatrix(keep, m.dim());
  out.weights = Vec::Ones(keep);
  for (Index k = 0; k < keep; ++k) out.points.row(k) = m.points.row(keys[k].second);
  return out;
}

}  // namespace

SparseCoupling truth_coupling(const std::vector<Index>& truth, Index cols) {
  std::vector<Triplet> e;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= cols) throw InvalidArgument("truth partner out of range");
    e.push_back({static_cast<Index>(i), truth[i], 1.0});
  }
  return SparseCoupling(static_cast<Index>(truth.size()), cols, std::move(e));
}

double objective_gap(const SparseCoupling& gamma, const SparseCoupling& truth, const CostMatrix& cost, const Vec& w0,
                     const Vec& w1) {
  if (gamma.rows() != truth.rows() || gamma.cols() != truth.cols())
    throw InvalidArgument("coupling and ground truth live on different index spaces");
  const double ref = oet_objective(truth, cost, w0, w1);
  const double obj = oet_objective(gamma, cost, w0, w1);
  const double scale = ref != 0.0 ? ref : w0.sum() + w1.sum();
  return (obj - ref) / scale;
}

double objective_gap(const SparseCoupling& gamma, const SparseCoupling& truth, const DiscreteMeasure& source,
                     const DiscreteMeasure& target, double delta, int threads) {
  if (gamma.rows() != truth.rows() || gamma.cols() != truth.cols())
    throw InvalidArgument("coupling and ground truth live on different index spaces");
  std::vector<IndexPair> pairs;
  for (const auto& e : gamma.entries()) pairs.push_back({e.row, e.col});
  for (const auto& e : truth.entries()) pairs.push_back({e.row, e.col});
  const SupportMask mask(gamma.rows(), gamma.cols(), std::move(pairs));
  const auto cost = build_cost(source.points, target.points, mask, delta, threads);
  return objective_gap(gamma, truth, cost, source.weights, target.weights);
}

AccuracyReport assignment_accuracy(const SparseCoupling& gamma, const std::vector<Index>& truth,
                                   const std::vector<std::string>& micro_labels,
                                   const std::vector<std::string>& macro_labels, const Vec& source_weights) {
  const auto rows = static_cast<std::size_t>(gamma.rows());
  if (truth.size() != rows || static_cast<std::size_t>(source_weights.size()) != rows)
    throw InvalidArgument("every source point needs a truth partner and a weight");
  if (micro_labels.size() != static_cast<std::size_t>(gamma.cols()) ||
      macro_labels.size() != static_cast<std::size_t>(gamma.cols()))
    throw InvalidArgument("target labels do not match the coupling columns");
  std::vector<Index> best(rows, -1);
  std::vector<double> best_value(rows, 0.0);
  for (const auto& e : gamma.entries())
    if (e.value > best_value[e.row]) {
      best_value[e.row] = e.value;
      best[e.row] = e.col;
    }
  AccuracyReport r;
  const double total = source_weights.sum();
  if (!(total > 0.0)) return r;
  for (std::size_t i = 0; i < rows; ++i) {
    const Index j = best[i], t = truth[i];
    if (j < 0) continue;
    const double w = source_weights[static_cast<Eigen::Index>(i)];
    r.point += w * (j == t);
    r.micro += w * (micro_labels[j] == micro_labels[t]);
    r.macro += w * (macro_labels[j] == macro_labels[t]);
  }
  r.point /= total;
  r.micro /= total;
  r.macro /= total;
  return r;
}

W1Result w1_distance(const DiscreteMeasure& a, const DiscreteMeasure& b, const W1Options& options) {
  if (a.size() == 0 || b.size() == 0) throw InvalidArgument("W1 needs non-empty measures");
  if (a.dim() != b.dim()) throw InvalidArgument("W1 measures have different dimensions");
  if (!(a.total() > 0.0) || !(b.total() > 0.0)) throw InvalidArgument("W1 needs positive total mass");
  if (options.max_support < 1) throw InvalidArgument("max_support must be positive");
  W1Result out;
  out.seed = options.seed;
  std::mt19937_64 rng(options.seed);
  const DiscreteMeasure* pa = &a;
  const DiscreteMeasure* pb = &b;
  DiscreteMeasure sa, sb;
  if (a.size() > options.max_support) {
    sa = subsample(a, options.max_support, rng);
    pa = &sa;
    out.subsampled = true;
  }
  if (b.size() > options.max_support) {
    sb = subsample(b, options.max_support, rng);
    pb = &sb;
    out.subsampled = true;
  }
  const Vec wa = pa->weights / pa->total();
  const Vec wb = pb->weights / pb->total();
  out.distance = exact_transport(wa, wb, euclidean_costs(pa->points, pb->points)).cost;
  return out;
}

double relative_mass_error(const SimulatedPopulation& predicted, const DiscreteMeasure& target) {
  const double ref = target.total();
  if (!(ref > 0.0)) throw InvalidArgument("relative mass error needs positive target mass");
  return std::abs(predicted.masses.sum() - ref) / ref;
}

void write_report(std::ostream& out, const CouplingReport& r) {
  out << "objective_gap_percent = " << 100.0 * r.objective_gap << '\n'
      << "point_acc = " << r.accuracy.point << '\n'
      << "micro_acc = " << r.accuracy.micro << '\n'
      << "macro_acc = " << r.accuracy.macro << '\n'
      << "wall_time_seconds = " << r.wall_time_seconds << '\n';
}

void append_report_row(const std::string& path, const std::string& label, const CouplingReport& r) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to results file " + path);
  if (fresh) out << "label,objective_gap_percent,point_acc,micro_acc,macro_acc,wall_time_seconds\n";
  out.precision(10);
  out << label << ',' << 100.0 * r.objective_gap << ',' << r.accuracy.point << ',' << r.accuracy.micro << ','
      << r.accuracy.macro << ',' << r.wall_time_seconds << '\n';
}

}  // namespace wfrflow
