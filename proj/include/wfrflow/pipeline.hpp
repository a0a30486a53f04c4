#pragma once

// End-to-end driver pieces shared by the command-line tool and the acceptance
// suite: configuration, per-interval multiscale coupling, sampler
// construction, coupling files, leave-one-out and the scaling benchmark.

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "wfrflow/cufm.hpp"
#include "wfrflow/datasets.hpp"
#include "wfrflow/metrics.hpp"

namespace wfrflow {

struct GenerateOptions {
  std::string kind = "multiscale";  // multiscale | unbalanced | crossing | translation
  SyntheticSpec multiscale;
  UnbalancedToySpec unbalanced = default_unbalanced_toy();
  CrossingSpec crossing;
  TranslationSeriesSpec translation;
};

struct PipelineConfig {
  std::string data = "data.csv";
  std::string priors;  // empty: no prior
  std::string truth;   // empty: no ground-truth pairing
  std::string output_dir = "out";
  TrainConfig train;
  SolverOptions solver;
  W1Options w1;
  int simulate_steps = 100;
  std::vector<double> simulate_times;  // empty: every snapshot time after the first
  int held_out = 1;
  int bench_base = 100;
  std::vector<int> bench_scales{1, 4, 16};
  int bench_repeats = 3;
  GenerateOptions generate;
};

struct GeneratedData {
  SnapshotTable table;
  TransitionPrior prior;
  std::vector<Index> truth;  // empty unless the generator has a ground-truth pairing
};

GeneratedData generate_data(const GenerateOptions& options);

void to_json(nlohmann::json& j, const SolverOptions& o);
void from_json(const nlohmann::json& j, SolverOptions& o);
void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

// Reads a JSON config; "a.b.c=value" overrides are applied before decoding,
// with value parsed as JSON when possible and as a string otherwise.
PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
PipelineConfig config_from_json(nlohmann::json j, const std::vector<std::string>& overrides = {});

MultiscaleConfig multiscale_config(const TrainConfig& train, const SolverOptions& solver);

// One hierarchy per time point, label columns as levels 1..L-1.
std::vector<HierarchyView> snapshot_views(const SnapshotTable& table);

struct IntervalCoupling {
  FinestMode mode = FinestMode::Sparse;
  MultiscaleResult result;
  double seconds = 0.0;
  // Sparse: finest-level semi-coupling. Independent: level L-1.
  SemiCoupling semi;
};

struct CouplingSet {
  std::vector<HierarchyView> views;
  std::vector<IntervalCoupling> intervals;
  double hierarchy_seconds = 0.0;  // building views from label columns
  double seconds = 0.0;            // all interval solves and semi-coupling extraction
};

CouplingSet couple_snapshots(const SnapshotTable& table, const TransitionPrior& prior, const MultiscaleConfig& config);

// Sparse: samplers over the finest semi-coupling. Independent: lifted samplers.
std::vector<std::unique_ptr<PairSampler>> make_samplers(const CouplingSet& set, const SolverOptions& solver);

// Finest coupling of interval k: solved in Sparse mode, lifted in Independent mode.
SparseCoupling finest_coupling(const CouplingSet& set, std::size_t k);

// Report for interval k against a pairing of its source and target points.
CouplingReport evaluate_coupling(const CouplingSet& set, std::size_t k, const std::vector<Index>& truth, double delta,
                                 int threads = 1);

// coupling_<k>.txt, gamma0_<k>.txt, gamma1_<k>.txt and the couplings.json
// manifest (mode, level, death rows, birth columns, per-level solver stats).
void save_coupling_set(const std::string& dir, const CouplingSet& set);
// Rebuilds views from the table and samplers from the saved files.
struct LoadedCouplings {
  CouplingSet set;
  std::vector<std::unique_ptr<PairSampler>> samplers;
};
LoadedCouplings load_coupling_set(const std::string& dir, const SnapshotTable& table, const SolverOptions& solver);

void save_coupling(const std::string& path, const SparseCoupling& gamma);
SparseCoupling load_coupling(const std::string& path, Index rows, Index cols);

// Trains on all intervals of the set with time points taken from the table.
FlowModel train_on(const CouplingSet& set, const std::vector<std::unique_ptr<PairSampler>>& samplers,
                   const SnapshotTable& table, TrainConfig config, std::vector<double>* loss_trace = nullptr);

// Particles and masses after simulating from snapshot `from` to `time`.
SimulatedPopulation simulate_from(const FlowModel& model, const SnapshotTable& table, std::size_t from, double time,
                                  int steps);

SnapshotTable population_table(const SimulatedPopulation& pop);

struct LooResult {
  int held_out = 0;
  double time = 0.0;
  double w1_with_prior = 0.0;
  double w1_without_prior = 0.0;
};

// Drops snapshot `held_out`, couples and trains on the rest, simulates from the
// previous snapshot to the held-out time and compares against it.
LooResult leave_one_out(const SnapshotTable& table, const TransitionPrior& prior, const PipelineConfig& config,
                        int held_out);

struct BenchRow {
  int scale = 0;
  Index points = 0;   // per time point
  double hierarchy_seconds = 0.0;
  double couple_seconds = 0.0;  // multiscale solves plus sampler construction
  double train_seconds = 0.0;
  double fraction = 0.0;  // couple / (hierarchy + couple + train)
  long peak_rss_kb = 0;
};

// Independent-mode scaling runs on the hierarchical benchmark with
// bench_base * scale points per micro cluster.
std::vector<BenchRow> scaling_bench(const PipelineConfig& config);

long peak_rss_kb();

}  // namespace wfrflow
