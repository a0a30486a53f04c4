#pragma once

// Pair samplers feeding flow-matching training. Each draw is a source point, a
// target point and the relative endpoint masses of the Dirac path joining them.

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "wfrflow/hierarchy.hpp"
#include "wfrflow/oet.hpp"

namespace wfrflow {

enum class PairKind : std::uint8_t { Transport, Death, Birth };

struct PairSample {
  Index source = -1;  // finest source index; -1 for birth pairs
  Index target = -1;  // finest target index; -1 for death pairs
  Vec x0;
  Vec x1;
  double m0 = 1.0;
  double m1 = 1.0;
  PairKind kind = PairKind::Transport;
};

class PairSampler {
public:
  virtual ~PairSampler() = default;
  virtual PairSample draw(std::mt19937_64& rng) const = 0;
  // Total un-normalized probability mass of the sampling distribution.
  virtual double total_mass() const = 0;
  // Number of finest source points behind the distribution.
  virtual std::size_t source_size() const = 0;
};

// Inverse-CDF over a fixed list of non-negative weights.
class CategoricalTable {
public:
  CategoricalTable() = default;
  explicit CategoricalTable(const std::vector<double>& weights);
  std::size_t draw(std::mt19937_64& rng) const;
  double total() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  std::size_t size() const { return cumulative_.size(); }

private:
  std::vector<double> cumulative_;
};

// Draws (I, J) from the level-(L-1) starting semi-coupling, then children
// i ~ alpha_{.|I}, j ~ beta_{.|J}; m0 = 1 and m1 = rho_IJ = gamma1_IJ / gamma0_IJ.
// Death rows emit (x0_i, x0_i, 1, 0), birth columns (x1_j, x1_j, 0, 1), weighted
// by their parent marginal mass. Storage is O(nnz(parent) + N0 + N1).
class LiftedSampler : public PairSampler {
public:
  LiftedSampler(const SparseCoupling& parent, const HierarchyView& source, const HierarchyView& target,
                const SolverOptions& options = {});

  PairSample draw(std::mt19937_64& rng) const override;
  double total_mass() const override { return blocks_.total(); }
  std::size_t source_size() const override { return static_cast<std::size_t>(points0_.rows()); }

  const SemiCoupling& parent_semi() const { return semi_; }
  // rho_IJ for the transport atoms, which come first in atom order.
  const std::vector<double>& mass_ratio() const { return rho_; }
  // (I, J) per atom; death atoms carry J = -1 and birth atoms I = -1.
  const std::vector<IndexPair>& atoms() const { return pairs_; }
  const std::vector<PairKind>& atom_kinds() const { return kinds_; }
  // Stored child probabilities; each parent block's entries sum to 1.
  double child_weight0(Index i) const { return alpha_[i]; }
  double child_weight1(Index j) const { return beta_[j]; }

private:
  SemiCoupling semi_;
  std::vector<IndexPair> pairs_;  // transport atoms, then death, then birth
  std::vector<PairKind> kinds_;
  std::vector<double> rho_;
  CategoricalTable blocks_;
  std::vector<CategoricalTable> children0_, children1_;
  std::vector<std::vector<Index>> members0_, members1_;
  std::vector<double> alpha_, beta_;
  PointMatrix points0_, points1_;
};

// Draws finest pairs proportionally to gamma0 entries with m1 = gamma1 / gamma0.
// Entries below the row floor are skipped; death rows and birth columns follow
// the LiftedSampler convention with weights mu0_i and mu1_j.
class ExplicitSampler : public PairSampler {
public:
  ExplicitSampler(const SemiCoupling& semi, const DiscreteMeasure& source, const DiscreteMeasure& target,
                  const SolverOptions& options = {});

  PairSample draw(std::mt19937_64& rng) const override;
  double total_mass() const override { return table_.total(); }
  std::size_t source_size() const override { return static_cast<std::size_t>(points0_.rows()); }

private:
  std::vector<IndexPair> pairs_;
  std::vector<PairKind> kinds_;
  std::vector<double> m1_;
  CategoricalTable table_;
  PointMatrix points0_, points1_;
};

std::vector<PairSample> sample_pairs(const PairSampler& sampler, std::size_t count, std::uint64_t seed);

}  // namespace wfrflow
