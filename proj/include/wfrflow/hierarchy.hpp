#pragma once

// Multiscale representation of a weighted point cloud and the coarse-to-fine
// masked OET driver. Levels are numbered 1..L: levels 1..L-1 come from label
// columns (coarse to fine), level L is the individual points.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wfrflow/oet.hpp"
#include "wfrflow/sparse.hpp"
#include "wfrflow/types.hpp"

namespace wfrflow {

struct DiscreteMeasure {
  PointMatrix points;
  Vec weights;

  Index size() const { return static_cast<Index>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }
  double total() const { return weights.sum(); }
  // Non-negative finite weights with at least one positive, finite coordinates.
  void validate() const;
};

struct HierarchyLevel {
  std::vector<std::string> names;  // cluster label per cluster id
  std::vector<Index> assignment;   // cluster id per point
  PointMatrix centroids;           // mass-weighted member means
  Vec weights;                     // member mass sums
  std::vector<Index> parent;       // cluster id at the previous level; empty at level 1
  std::vector<std::vector<Index>> children;  // cluster ids at the next level; empty at level L

  Index size() const { return static_cast<Index>(names.size()); }
  std::optional<Index> find(const std::string& name) const;
};

class HierarchyView {
public:
  HierarchyView() = default;
  HierarchyView(DiscreteMeasure measure, std::vector<HierarchyLevel> levels)
      : measure_(std::move(measure)), levels_(std::move(levels)) {}

  int num_levels() const { return static_cast<int>(levels_.size()); }
  // 1-based level index.
  const HierarchyLevel& level(int l) const { return levels_.at(static_cast<std::size_t>(l - 1)); }
  const DiscreteMeasure& measure() const { return measure_; }

private:
  DiscreteMeasure measure_;
  std::vector<HierarchyLevel> levels_;
};

// labels[k][p] is the level-(k+1) label of point p, coarse to fine. Cluster ids
// within a level follow label order (numeric when every label is an integer).
// Throws InvalidArgument for inconsistent nesting.
HierarchyView build_hierarchy(const DiscreteMeasure& measure, const std::vector<std::vector<std::string>>& labels);

// Nested weighted k-means for unlabeled data: level 1 has clusters_per_level[0]
// clusters, each cluster at level l splits into clusters_per_level[l] children.
// Fixed 50 Lloyd iterations with k-means++ seeding.
std::vector<std::vector<std::string>> kmeans_labels(const DiscreteMeasure& measure,
                                                    const std::vector<int>& clusters_per_level, std::uint64_t seed);

// Binary transition matrices per label level, kept as allowed label pairs.
// Levels without an entry are all-allowed.
class TransitionPrior {
public:
  void set_level(int level, std::vector<std::pair<std::string, std::string>> allowed);
  bool has_level(int level) const { return levels_.count(level) != 0; }
  const std::map<int, std::vector<std::pair<std::string, std::string>>>& levels() const { return levels_; }
  // Mask over cluster ids of the two views; labels absent from a view are ignored.
  std::optional<SupportMask> mask_for(int level, const HierarchyView& source, const HierarchyView& target) const;

private:
  std::map<int, std::vector<std::pair<std::string, std::string>>> levels_;
};

// Text format: "level <l>" starts a section, each following line is
// "<source_label> <target_label>"; '#' starts a comment. An empty file is all-allowed.
TransitionPrior read_prior(std::istream& in);
TransitionPrior read_prior_file(const std::string& path);
void write_prior(std::ostream& out, const TransitionPrior& prior);
void write_prior_file(const std::string& path, const TransitionPrior& prior);

// M = B (.) H with H_ij = [gamma_{pa(i) pa(j)} / w0_{pa(i)} >= epsilon]. Without a
// parent coupling H is all-ones; without a prior B is all-ones.
SupportMask build_mask(const std::optional<SupportMask>& prior, const SparseCoupling* parent_coupling,
                       const Vec& parent_weights0, const std::vector<Index>& parent0,
                       const std::vector<Index>& parent1, Index rows, Index cols, double epsilon);

enum class FinestMode { Sparse, Independent };
FinestMode parse_finest_mode(const std::string& name);
const char* to_string(FinestMode m);

struct MultiscaleConfig {
  double delta = 1.0;
  FinestMode finest_mode = FinestMode::Sparse;
  // Mask threshold per level 2..L (index l-2); the last value repeats.
  std::vector<double> epsilon{1e-3};
  SolverOptions solver;

  double epsilon_for(int level) const;
};

struct LevelReport {
  int level = 0;
  std::size_t mask_size = 0;
  SolveStats stats;
};

struct MultiscaleResult {
  // couplings[l-1] is the level-l coupling for every solved level.
  std::vector<SparseCoupling> couplings;
  std::vector<LevelReport> reports;
};

// Solves levels 1..L-1, and level L too under Sparse mode.
// Throws EmptySupportError naming the level when a mask has no admissible pair.
MultiscaleResult solve_multiscale(const HierarchyView& source, const HierarchyView& target,
                                  const TransitionPrior& prior, const MultiscaleConfig& config);

// gamma_ij = gamma_IJ (w0_i / w0_I) (w1_j / w1_J) from level L-1 to the points.
SparseCoupling lift_coupling(const SparseCoupling& parent, const HierarchyView& source, const HierarchyView& target);

}  // namespace wfrflow
