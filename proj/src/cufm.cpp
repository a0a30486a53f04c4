#include "wfrflow/cufm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "wfrflow/error.hpp"

namespace wfrflow {

namespace {

Matrix network_input(const PointMatrix& x, const Vec& t) {
  Matrix in(x.cols() + 1, x.rows());
  in.topRows(x.cols()) = x.transpose();
  in.row(x.cols()) = t.transpose();
  return in;
}

// Returns the loss; sets bad to the first sample with a non-finite term.
double loss_impl(const FlowModel& model, std::span<const PathTarget> batch, double kappa, FlowGradient* grad,
                 std::ptrdiff_t& bad) {
  bad = -1;
  if (batch.empty()) throw InvalidArgument("cufm loss needs a non-empty batch");
  const int D = model.dim();
  const auto n = static_cast<Eigen::Index>(batch.size());
  PointMatrix x(n, D);
  Vec t(n), g(n), m(n);
  Matrix u(D, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& p = batch[static_cast<std::size_t>(k)];
    if (p.x.size() != D || p.u.size() != D) throw InvalidArgument("batch sample has the wrong dimension");
    x.row(k) = p.x.transpose();
    u.col(k) = p.u;
    t[k] = p.t;
    g[k] = p.g;
    m[k] = p.m;
  }
  const Matrix in = network_input(x, t);
  Mlp::Tape tv, tg;
  const Matrix v = model.velocity_net().forward(in, grad ? &tv : nullptr);
  const Matrix gp = model.growth_net().forward(in, grad ? &tg : nullptr);

  const Matrix rv = v - u;
  const Eigen::RowVectorXd rg = gp.row(0) - g.transpose();
  double total = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double term = m[k] * (rv.col(k).squaredNorm() + kappa * rg[k] * rg[k]);
    if (!std::isfinite(term)) {
      bad = k;
      return term;
    }
    total += term;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad) {
    const Eigen::RowVectorXd w = (2.0 * inv_n) * m.transpose();
    const Matrix dv = rv.array().rowwise() * w.array();
    const Matrix dg = (kappa * rg.array() * w.array()).matrix();
    grad->velocity = Vec::Zero(model.velocity_net().parameters().size());
    grad->growth = Vec::Zero(model.growth_net().parameters().size());
    model.velocity_net().backward(tv, dv, grad->velocity);
    model.growth_net().backward(tg, dg, grad->growth);
  }
  return total * inv_n;
}

bool all_finite(const Vec& v) { return v.allFinite(); }

nlohmann::json net_json(const Mlp& net) {
  const auto& a = net.architecture();
  const Vec& p = net.parameters();
  return {{"inputs", a.inputs},
          {"outputs", a.outputs},
          {"layers", a.layers},
          {"hidden", a.hidden},
          {"leak", a.leak},
          {"parameters", std::vector<double>(p.data(), p.data() + p.size())}};
}

Mlp net_from_json(const nlohmann::json& j) {
  MlpArchitecture a;
  a.inputs = j.at("inputs").get<int>();
  a.outputs = j.at("outputs").get<int>();
  a.layers = j.at("layers").get<int>();
  a.hidden = j.at("hidden").get<int>();
  a.leak = j.at("leak").get<double>();
  Mlp net(a);
  const auto p = j.at("parameters").get<std::vector<double>>();
  if (p.size() != a.parameter_count()) throw ParseError("checkpoint parameter count does not match architecture", 0);
  net.parameters() = Eigen::Map<const Vec>(p.data(), static_cast<Eigen::Index>(p.size()));
  return net;
}

}  // namespace

EpochMode parse_epoch_mode(const std::string& name) {
  if (name == "step") return EpochMode::Step;
  if (name == "pass") return EpochMode::Pass;
  throw InvalidArgument("unknown epoch mode '" + name + "' (expected step or pass)");
}

const char* to_string(EpochMode m) { return m == EpochMode::Step ? "step" : "pass"; }

void TrainConfig::validate() const {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidArgument("delta must be positive");
  if (!(kappa >= 0.0)) throw InvalidArgument("kappa must be non-negative");
  if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be non-negative");
  if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
  if (epochs < 0) throw InvalidArgument("epochs must be non-negative");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (time_points.size() < 2) throw InvalidArgument("need at least two time points");
  for (std::size_t k = 1; k < time_points.size(); ++k)
    if (!(time_points[k] > time_points[k - 1])) throw InvalidArgument("time points must be strictly increasing");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
  if (layers < 1 || hidden < 1) throw InvalidArgument("network depth and width must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"delta", c.delta},
       {"kappa", c.kappa},
       {"sigma", c.sigma},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"learning_rate", c.learning_rate},
       {"seed", c.seed},
       {"time_points", c.time_points},
       {"finest_mode", to_string(c.finest_mode)},
       {"epsilon", c.epsilon},
       {"layers", c.layers},
       {"hidden", c.hidden},
       {"epoch_mode", to_string(c.epoch_mode)}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.delta = j.value("delta", d.delta);
  c.kappa = j.value("kappa", d.kappa);
  c.sigma = j.value("sigma", d.sigma);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.epochs = j.value("epochs", d.epochs);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.seed = j.value("seed", d.seed);
  c.time_points = j.value("time_points", d.time_points);
  c.finest_mode = parse_finest_mode(j.value("finest_mode", std::string(to_string(d.finest_mode))));
  c.epsilon = j.value("epsilon", d.epsilon);
  c.layers = j.value("layers", d.layers);
  c.hidden = j.value("hidden", d.hidden);
  c.epoch_mode = parse_epoch_mode(j.value("epoch_mode", std::string(to_string(d.epoch_mode))));
}

FlowModel::FlowModel(int dim, int layers, int hidden, std::uint64_t seed) : dim_(dim) {
  if (dim < 1) throw InvalidArgument("model dimension must be positive");
  MlpArchitecture v{dim + 1, dim, layers, hidden, 0.01};
  MlpArchitecture g{dim + 1, 1, layers, hidden, 0.01};
  velocity_ = Mlp(v, 2 * seed + 1);
  growth_ = Mlp(g, 2 * seed + 2);
}

std::size_t FlowModel::parameter_count() const {
  return static_cast<std::size_t>(velocity_.parameters().size() + growth_.parameters().size());
}

void FlowModel::evaluate(const PointMatrix& x, const Vec& t, PointMatrix& v, Vec& g) const {
  if (x.cols() != dim_ || t.size() != x.rows()) throw InvalidArgument("evaluation input shape mismatch");
  const Matrix in = network_input(x, t);
  v = velocity_.forward(in).transpose();
  g = growth_.forward(in).row(0).transpose();
}

bool operator==(const FlowModel& a, const FlowModel& b) {
  return a.dim_ == b.dim_ && a.velocity_.architecture() == b.velocity_.architecture() &&
         a.growth_.architecture() == b.growth_.architecture() &&
         a.velocity_.parameters() == b.velocity_.parameters() && a.growth_.parameters() == b.growth_.parameters();
}

double cufm_loss(const FlowModel& model, std::span<const PathTarget> batch, double kappa, FlowGradient* grad) {
  std::ptrdiff_t bad = -1;
  const double loss = loss_impl(model, batch, kappa, grad, bad);
  if (bad >= 0) throw NonFiniteError("non-finite loss term at sample " + std::to_string(bad));
  return loss;
}

std::vector<PathTarget> draw_training_batch(std::span<const PairSampler* const> samplers, const TrainConfig& config,
                                             std::mt19937_64& rng) {
  if (samplers.size() + 1 != config.time_points.size())
    throw InvalidArgument("need one sampler per adjacent time-point pair");
  std::vector<PathTarget> batch;
  batch.reserve(samplers.size() * static_cast<std::size_t>(config.batch_size));
  for (std::size_t k = 0; k < samplers.size(); ++k) {
    const double t0 = config.time_points[k];
    const double span = config.time_points[k + 1] - t0;
    int made = 0, attempts = 0;
    while (made < config.batch_size) {
      if (++attempts > 100 * config.batch_size)
        throw EmptySupportError("interval " + std::to_string(k) + " yields no pairs above the mass floor");
      const PairSample s = samplers[k]->draw(rng);
      if (!(s.m0 > 0.0) && !(s.m1 > 0.0)) continue;
      double lo = 0.0, hi = 1.0;
      if (s.kind == PairKind::Death || s.m1 == 0.0) hi = 1.0 - kEndpointMargin;
      if (s.kind == PairKind::Birth || s.m0 == 0.0) lo = kEndpointMargin;
      const double t = std::uniform_real_distribution<double>(lo, hi)(rng);
      const GeodesicParams p = geodesic_constants(s.m0, s.m1, s.x0, s.x1, config.delta);
      if (!(path_mass(p, t) >= kMassFloor)) continue;
      const Vec x = sample_conditional_point(p, t, config.sigma, rng);
      PathTarget target = conditional_targets(p, t, x, config.sigma);
      target.t = t0 + span * t;
      target.u /= span;
      target.g /= span;
      batch.push_back(std::move(target));
      ++made;
    }
  }
  return batch;
}

FlowModel train(std::span<const PairSampler* const> samplers, int dim, const TrainConfig& config,
                std::vector<double>* loss_trace) {
  config.validate();
  if (samplers.size() + 1 != config.time_points.size())
    throw InvalidArgument("need one sampler per adjacent time-point pair");
  FlowModel model(dim, config.layers, config.hidden, config.seed);
  const AdamOptions adam{config.learning_rate};
  Adam opt_v(static_cast<std::size_t>(model.velocity_net().parameters().size()), adam);
  Adam opt_g(static_cast<std::size_t>(model.growth_net().parameters().size()), adam);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::size_t steps_per_epoch = 1;
  if (config.epoch_mode == EpochMode::Pass) {
    std::size_t largest = 1;
    for (const auto* s : samplers) largest = std::max(largest, s->source_size());
    const auto b = static_cast<std::size_t>(config.batch_size);
    steps_per_epoch = (largest + b - 1) / b;
  }
  FlowGradient grad;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const auto batch = draw_training_batch(samplers, config, rng);
      std::ptrdiff_t bad = -1;
      const double loss = loss_impl(model, batch, config.kappa, &grad, bad);
      if (bad >= 0) {
        const auto interval = bad / config.batch_size;
        throw NonFiniteError("non-finite loss at epoch " + std::to_string(epoch) + ", interval " +
                             std::to_string(interval) + ", sample " + std::to_string(bad));
      }
      opt_v.step(model.velocity_net().parameters(), grad.velocity);
      opt_g.step(model.growth_net().parameters(), grad.growth);
      if (!all_finite(model.velocity_net().parameters()) || !all_finite(model.growth_net().parameters()))
        throw NonFiniteError("non-finite parameters after epoch " + std::to_string(epoch));
      epoch_loss += loss;
    }
    if (loss_trace) loss_trace->push_back(epoch_loss / static_cast<double>(steps_per_epoch));
  }
  return model;
}

SimulatedPopulation simulate(const FlowModel& model, const SimulatedPopulation& initial, double t_start, double t_end,
                             int steps) {
  if (steps < 1) throw InvalidArgument("simulate needs at least one step");
  if (initial.particles.cols() != model.dim() || initial.masses.size() != initial.particles.rows())
    throw InvalidArgument("population shape does not match the model");
  SimulatedPopulation pop = initial;
  const double h = (t_end - t_start) / steps;
  PointMatrix v;
  Vec g;
  for (int s = 0; s < steps; ++s) {
    const Vec t = Vec::Constant(pop.particles.rows(), t_start + s * h);
    model.evaluate(pop.particles, t, v, g);
    pop.particles += h * v;
    pop.masses.array() *= (h * g.array()).exp();
    if (!pop.particles.allFinite() || !pop.masses.allFinite())
      throw NonFiniteError("non-finite state at simulation step " + std::to_string(s));
  }
  pop.time = t_end;
  return pop;
}

double gradient_check(const FlowModel& model, std::span<const PathTarget> batch, double kappa, double h, int probes,
                      std::uint64_t seed) {
  FlowGradient grad;
  const double loss = cufm_loss(model, batch, kappa, &grad);
  // Gradients below this are compared in absolute terms.
  const double floor = 1e-6 * std::max(1.0, loss);
  const auto nv = model.velocity_net().parameters().size();
  const auto total = nv + model.growth_net().parameters().size();
  FlowModel probe = model;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, total - 1);
  double worst = 0.0;
  for (int k = 0; k < probes; ++k) {
    const Eigen::Index idx = pick(rng);
    Vec& params = idx < nv ? probe.velocity_net().parameters() : probe.growth_net().parameters();
    const Eigen::Index local = idx < nv ? idx : idx - nv;
    const double analytic = idx < nv ? grad.velocity[local] : grad.growth[local];
    const double saved = params[local];
    params[local] = saved + h;
    const double up = cufm_loss(probe, batch, kappa);
    params[local] = saved - h;
    const double down = cufm_loss(probe, batch, kappa);
    params[local] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic - numeric) / scale);
  }
  return worst;
}

nlohmann::json checkpoint_json(const FlowModel& model, const TrainConfig& config) {
  return {{"format", "wfrflow-model"},
          {"version", 1},
          {"dim", model.dim()},
          {"velocity", net_json(model.velocity_net())},
          {"growth", net_json(model.growth_net())},
          {"config", config}};
}

std::pair<FlowModel, TrainConfig> checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "wfrflow-model") throw ParseError("not a model checkpoint", 0);
    const int dim = j.at("dim").get<int>();
    Mlp v = net_from_json(j.at("velocity"));
    Mlp g = net_from_json(j.at("growth"));
    if (v.architecture().inputs != dim + 1 || v.architecture().outputs != dim || g.architecture().inputs != dim + 1 ||
        g.architecture().outputs != 1)
      throw ParseError("checkpoint network shapes do not match its dimension", 0);
    FlowModel model(dim, v.architecture().layers, 1, 0);
    model.velocity_net() = std::move(v);
    model.growth_net() = std::move(g);
    return {std::move(model), j.at("config").get<TrainConfig>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what(), 0);
  }
}

void save_checkpoint(const std::string& path, const FlowModel& model, const TrainConfig& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out << checkpoint_json(model, config).dump() << '\n';
  if (!out) throw IoError("failed writing checkpoint " + path);
}

std::pair<FlowModel, TrainConfig> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what(), 0);
  }
  return checkpoint_from_json(j);
}

void write_loss_trace(const std::string& path, const std::vector<double>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss trace " + path);
  out.precision(17);
  for (std::size_t e = 0; e < trace.size(); ++e) out << e << ' ' << trace[e] << '\n';
}

}  // namespace wfrflow
