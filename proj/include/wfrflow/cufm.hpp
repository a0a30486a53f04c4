#pragma once

// Mass-weighted conditional unbalanced flow matching: a velocity network and a
// growth network over (x, t), trained on traveling-Gaussian targets drawn from
// per-interval pair samplers, and forward Euler simulation of the learned fields.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wfrflow/geometry.hpp"
#include "wfrflow/hierarchy.hpp"
#include "wfrflow/mlp.hpp"
#include "wfrflow/sampling.hpp"

namespace wfrflow {

// t-range for pairs that vanish at one end.
inline constexpr double kEndpointMargin = 1e-3;

// Step: one optimizer update per epoch. Pass: ceil(max source size / batch)
// updates per epoch, so one epoch touches roughly every source point once.
enum class EpochMode { Step, Pass };
EpochMode parse_epoch_mode(const std::string& name);
const char* to_string(EpochMode m);

struct TrainConfig {
  double delta = 1.0;
  double kappa = 1.0;
  double sigma = 0.1;
  int batch_size = 256;
  int epochs = 2000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::vector<double> time_points{0.0, 1.0};
  FinestMode finest_mode = FinestMode::Sparse;
  double epsilon = 1e-3;
  int layers = 5;
  int hidden = 256;
  EpochMode epoch_mode = EpochMode::Step;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

class FlowModel {
public:
  FlowModel() = default;
  FlowModel(int dim, int layers, int hidden, std::uint64_t seed);

  int dim() const { return dim_; }
  Mlp& velocity_net() { return velocity_; }
  const Mlp& velocity_net() const { return velocity_; }
  Mlp& growth_net() { return growth_; }
  const Mlp& growth_net() const { return growth_; }
  std::size_t parameter_count() const;

  // x: n x D points, t: n absolute times. Fills v (n x D) and g (n).
  void evaluate(const PointMatrix& x, const Vec& t, PointMatrix& v, Vec& g) const;

  friend bool operator==(const FlowModel& a, const FlowModel& b);

private:
  int dim_ = 0;
  Mlp velocity_;
  Mlp growth_;
};

struct FlowGradient {
  Vec velocity;
  Vec growth;
};

// mean_k m_k (|v(x_k, t_k) - u_k|^2 + kappa (g(x_k, t_k) - g_k)^2). Throws
// NonFiniteError naming the first offending sample.
double cufm_loss(const FlowModel& model, std::span<const PathTarget> batch, double kappa,
                 FlowGradient* grad = nullptr);

// Builds one training batch: b pairs per interval, normalized t uniform (pulled
// in by kEndpointMargin for death and birth pairs), absolute time, targets
// divided by the interval length.
std::vector<PathTarget> draw_training_batch(std::span<const PairSampler* const> samplers, const TrainConfig& config,
                                             std::mt19937_64& rng);

// Per-epoch mean step loss is appended to loss_trace when given.
FlowModel train(std::span<const PairSampler* const> samplers, int dim, const TrainConfig& config,
                std::vector<double>* loss_trace = nullptr);

struct SimulatedPopulation {
  PointMatrix particles;
  Vec masses;
  double time = 0.0;
};

// Explicit Euler on x and ln m.
SimulatedPopulation simulate(const FlowModel& model, const SimulatedPopulation& initial, double t_start, double t_end,
                             int steps);

// Max relative discrepancy between analytic and centered-difference gradients
// over `probes` random parameters. The denominator is floored at
// 1e-6 * max(1, loss) so vanishing gradients are compared absolutely.
double gradient_check(const FlowModel& model, std::span<const PathTarget> batch, double kappa, double h = 1e-5,
                      int probes = 128, std::uint64_t seed = 0);

void save_checkpoint(const std::string& path, const FlowModel& model, const TrainConfig& config);
std::pair<FlowModel, TrainConfig> load_checkpoint(const std::string& path);
nlohmann::json checkpoint_json(const FlowModel& model, const TrainConfig& config);
std::pair<FlowModel, TrainConfig> checkpoint_from_json(const nlohmann::json& j);

void write_loss_trace(const std::string& path, const std::vector<double>& trace);

}  // namespace wfrflow
