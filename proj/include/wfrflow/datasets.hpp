#pragma once

// Snapshot tables (one row per cell: coordinates, time, hierarchical labels,
// weight), the hierarchical synthetic benchmark, unbalanced and crossing toys,
// and CSV I/O.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "wfrflow/hierarchy.hpp"

namespace wfrflow {

struct SnapshotTable {
  PointMatrix x;
  std::vector<double> t;
  std::vector<std::vector<std::string>> labels;  // labels[level - 1][row]
  Vec w;

  Index rows() const { return static_cast<Index>(x.rows()); }
  int dim() const { return static_cast<int>(x.cols()); }
  int label_levels() const { return static_cast<int>(labels.size()); }
  // Sorted distinct time values.
  std::vector<double> time_points() const;
  // Rows whose time equals time_points()[k], in table order.
  std::vector<Index> rows_at(std::size_t k) const;
  void validate() const;
  friend bool operator==(const SnapshotTable&, const SnapshotTable&) = default;
};

struct Snapshot {
  double time = 0.0;
  DiscreteMeasure measure;
  std::vector<std::vector<std::string>> labels;  // per level, aligned with measure rows
  std::vector<Index> rows;                       // table row of each point
};

Snapshot snapshot_at(const SnapshotTable& table, std::size_t k);
// Concatenates per-time blocks; every block must have the same dimension and label depth.
SnapshotTable concat_tables(const std::vector<SnapshotTable>& parts);

// Cell counts per (time, level-1 label).
std::map<std::pair<double, std::string>, std::size_t> row_counts(const SnapshotTable& table);

struct SyntheticSpec {
  std::vector<double> macro_offsets{5.0, 0.0, -5.0};
  std::vector<std::pair<double, double>> micro_offsets{{0, 0}, {0, 1},  {0, -1}, {-1, 0}, {1, 0},
                                                       {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  double anchor_a = 2.0;
  double anchor_b = 2.0;
  int per_micro = 1000;
  double sigma = 0.1;
  std::pair<double, double> translation{5.0, 0.0};
  std::uint64_t seed = 0;
};

// Translation benchmark plus its ground truth. Point k of snapshot 0 is paired
// with point k of snapshot 1.
struct MultiscaleDataset {
  SnapshotTable table;
  std::vector<Index> truth;  // target index per source index
  TransitionPrior prior;     // identity blocks at both label levels
};

// Micro centers c_{m,r} = (a, b + d_m) + o_r; macro labels are m, micro labels 9m + r.
std::pair<double, double> micro_center(const SyntheticSpec& spec, int macro, int micro);
MultiscaleDataset generate_multiscale(const SyntheticSpec& spec);

struct ToyComponent {
  std::vector<double> mean0;
  std::vector<double> mean1;
  double sigma = 0.2;
  int count0 = 100;
  int count1 = 100;
};

struct UnbalancedToySpec {
  std::vector<ToyComponent> components;
  std::uint64_t seed = 0;
};

// Two 2-D components moving right by one unit; the second doubles its mass.
UnbalancedToySpec default_unbalanced_toy();

struct UnbalancedToy {
  SnapshotTable table;             // times 0 and 1, level-1 label = component index
  std::vector<double> mass_ratio;  // count1 / count0 per component
  TransitionPrior prior;           // identity on components
};

UnbalancedToy generate_unbalanced_toy(const UnbalancedToySpec& spec);

// Two branches that swap vertical position while moving right, crossing at
// the middle time. Nearest-point transport between the end times pairs each
// branch with the wrong one; the identity prior on branch labels forbids it.
struct CrossingSpec {
  int per_branch = 100;
  double sigma = 0.1;
  double length = 2.0;      // horizontal travel between first and last time
  double separation = 2.0;  // vertical distance between branches at the ends
  std::uint64_t seed = 0;
};

struct CrossingToy {
  SnapshotTable table;  // times 0, 1, 2
  TransitionPrior prior;
};

CrossingToy generate_crossing_toy(const CrossingSpec& spec);

// Clusters translated at constant velocity, one snapshot per time.
struct TranslationSeriesSpec {
  int clusters = 3;
  int per_cluster = 100;
  double sigma = 0.1;
  std::vector<double> times{0.0, 1.0, 2.0};
  std::pair<double, double> velocity{1.0, 0.0};
  std::uint64_t seed = 0;
};

struct TranslationSeries {
  SnapshotTable table;
  TransitionPrior prior;
};

TranslationSeries generate_translation_series(const TranslationSeriesSpec& spec);

// Header x0..x{D-1}, t, l1..lL, w (w optional on input, default 1).
void write_snapshots(std::ostream& out, const SnapshotTable& table);
void save_snapshots(const std::string& path, const SnapshotTable& table);
SnapshotTable read_snapshots(std::istream& in);
SnapshotTable load_snapshots(const std::string& path);

// "source,target" index lines under a header.
void save_pairing(const std::string& path, const std::vector<Index>& truth);
std::vector<Index> load_pairing(const std::string& path);

}  // namespace wfrflow
