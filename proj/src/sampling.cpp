#include "wfrflow/sampling.hpp"

#include <algorithm>

#include "wfrflow/error.hpp"

namespace wfrflow {

CategoricalTable::CategoricalTable(const std::vector<double>& weights) {
  cumulative_.resize(weights.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!(weights[k] >= 0.0)) throw InvalidArgument("categorical weights must be non-negative");
    acc += weights[k];
    cumulative_[k] = acc;
  }
}

std::size_t CategoricalTable::draw(std::mt19937_64& rng) const {
  if (!(total() > 0.0)) throw EmptySupportError("cannot sample from an all-zero distribution");
  const double u = std::uniform_real_distribution<double>(0.0, total())(rng);
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  auto k = static_cast<std::size_t>(it - cumulative_.begin());
  if (k >= cumulative_.size()) k = cumulative_.size() - 1;
  // Skip zero-width bins that upper_bound cannot land in only by rounding.
  while (k > 0 && cumulative_[k] == cumulative_[k - 1]) --k;
  return k;
}

LiftedSampler::LiftedSampler(const SparseCoupling& parent, const HierarchyView& source,
                             const HierarchyView& target, const SolverOptions& options) {
  const int L = source.num_levels();
  if (L < 2 || target.num_levels() != L) throw InvalidArgument("lifted sampling needs hierarchies with L >= 2");
  const auto& P0 = source.level(L - 1);
  const auto& P1 = target.level(L - 1);
  if (parent.rows() != P0.size() || parent.cols() != P1.size())
    throw InvalidArgument("parent coupling shape does not match level L-1");
  semi_ = extract_semi_coupling(parent, P0.weights, P1.weights, options);
  points0_ = source.measure().points;
  points1_ = target.measure().points;

  const Vec& w0 = source.measure().weights;
  const Vec& w1 = target.measure().weights;
  alpha_.assign(w0.size(), 0.0);
  beta_.assign(w1.size(), 0.0);
  members0_ = P0.children;
  members1_ = P1.children;
  auto child_tables = [](const std::vector<std::vector<Index>>& members, const Vec& w, std::vector<double>& prob) {
    std::vector<CategoricalTable> tables;
    for (const auto& kids : members) {
      std::vector<double> cw;
      double total = 0.0;
      for (Index c : kids) total += w[c];
      for (Index c : kids) {
        cw.push_back(w[c]);
        prob[c] = total > 0.0 ? w[c] / total : 0.0;
      }
      tables.emplace_back(cw);
    }
    return tables;
  };
  children0_ = child_tables(members0_, w0, alpha_);
  children1_ = child_tables(members1_, w1, beta_);

  std::vector<double> mass;
  const auto g0 = semi_.gamma0.entries();
  const auto g1 = semi_.gamma1.entries();
  for (std::size_t e = 0; e < g0.size(); ++e) {
    if (!(g0[e].value > 0.0) || !(g1[e].value > 0.0)) continue;
    pairs_.push_back({g0[e].row, g0[e].col});
    kinds_.push_back(PairKind::Transport);
    rho_.push_back(g1[e].value / g0[e].value);
    mass.push_back(g0[e].value);
  }
  for (Index I : semi_.death_rows) {
    if (!(P0.weights[I] > 0.0)) continue;
    pairs_.push_back({I, -1});
    kinds_.push_back(PairKind::Death);
    mass.push_back(P0.weights[I]);
  }
  for (Index J : semi_.birth_cols) {
    if (!(P1.weights[J] > 0.0)) continue;
    pairs_.push_back({-1, J});
    kinds_.push_back(PairKind::Birth);
    mass.push_back(P1.weights[J]);
  }
  blocks_ = CategoricalTable(mass);
}

PairSample LiftedSampler::draw(std::mt19937_64& rng) const {
  const std::size_t k = blocks_.draw(rng);
  PairSample s;
  s.kind = kinds_[k];
  const auto [I, J] = pairs_[k];
  if (s.kind != PairKind::Birth) s.source = members0_[I][children0_[I].draw(rng)];
  if (s.kind != PairKind::Death) s.target = members1_[J][children1_[J].draw(rng)];
  switch (s.kind) {
    case PairKind::Transport:
      s.x0 = points0_.row(s.source).transpose();
      s.x1 = points1_.row(s.target).transpose();
      s.m0 = 1.0;
      s.m1 = rho_[k];
      break;
    case PairKind::Death:
      s.x0 = points0_.row(s.source).transpose();
      s.x1 = s.x0;
      s.m0 = 1.0;
      s.m1 = 0.0;
      break;
    case PairKind::Birth:
      s.x1 = points1_.row(s.target).transpose();
      s.x0 = s.x1;
      s.m0 = 0.0;
      s.m1 = 1.0;
      break;
  }
  return s;
}

ExplicitSampler::ExplicitSampler(const SemiCoupling& semi, const DiscreteMeasure& source,
                                 const DiscreteMeasure& target, const SolverOptions& options) {
  if (semi.gamma0.rows() != source.size() || semi.gamma0.cols() != target.size())
    throw InvalidArgument("semi-coupling shape does not match the measures");
  points0_ = source.points;
  points1_ = target.points;
  const double floor = source.size() > 0 ? options.row_floor_scale * source.total() / source.size() : 0.0;
  std::vector<double> mass;
  const auto g0 = semi.gamma0.entries();
  const auto g1 = semi.gamma1.entries();
  for (std::size_t e = 0; e < g0.size(); ++e) {
    if (!(g0[e].value >= floor) || !(g0[e].value > 0.0) || !(g1[e].value > 0.0)) continue;
    pairs_.push_back({g0[e].row, g0[e].col});
    kinds_.push_back(PairKind::Transport);
    m1_.push_back(g1[e].value / g0[e].value);
    mass.push_back(g0[e].value);
  }
  for (Index i : semi.death_rows) {
    if (!(source.weights[i] > 0.0)) continue;
    pairs_.push_back({i, -1});
    kinds_.push_back(PairKind::Death);
    m1_.push_back(0.0);
    mass.push_back(source.weights[i]);
  }
  for (Index j : semi.birth_cols) {
    if (!(target.weights[j] > 0.0)) continue;
    pairs_.push_back({-1, j});
    kinds_.push_back(PairKind::Birth);
    m1_.push_back(1.0);
    mass.push_back(target.weights[j]);
  }
  table_ = CategoricalTable(mass);
}

PairSample ExplicitSampler::draw(std::mt19937_64& rng) const {
  const std::size_t k = table_.draw(rng);
  PairSample s;
  s.kind = kinds_[k];
  s.source = pairs_[k].row;
  s.target = pairs_[k].col;
  if (s.kind != PairKind::Birth) s.x0 = points0_.row(s.source).transpose();
  if (s.kind != PairKind::Death) s.x1 = points1_.row(s.target).transpose();
  if (s.kind == PairKind::Death) s.x1 = s.x0;
  if (s.kind == PairKind::Birth) s.x0 = s.x1;
  s.m0 = s.kind == PairKind::Birth ? 0.0 : 1.0;
  s.m1 = m1_[k];
  return s;
}

std::vector<PairSample> sample_pairs(const PairSampler& sampler, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PairSample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(sampler.draw(rng));
  return out;
}

}  // namespace wfrflow
