#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "wfrflow/cufm.hpp"
#include "wfrflow/error.hpp"

using namespace wfrflow;

namespace {

// Zero network whose outputs are the last-layer biases.
FlowModel constant_model(int dim, const Vec& velocity, double growth) {
  FlowModel m(dim, 3, 8, 0);
  m.velocity_net().parameters().setZero();
  m.growth_net().parameters().setZero();
  auto& pv = m.velocity_net().parameters();
  pv.tail(dim) = velocity;
  m.growth_net().parameters().tail(1)[0] = growth;
  return m;
}

std::vector<PathTarget> random_batch(std::mt19937_64& rng, int dim, int n) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.1, 2.0), t(0.0, 1.0);
  std::vector<PathTarget> batch(n);
  for (auto& p : batch) {
    p.x = Vec(dim);
    p.u = Vec(dim);
    for (int d = 0; d < dim; ++d) {
      p.x[d] = z(rng);
      p.u[d] = z(rng);
    }
    p.t = t(rng);
    p.g = z(rng);
    p.m = u(rng);
  }
  return batch;
}

struct SinglePair {
  DiscreteMeasure a, b;
  SemiCoupling semi;
};

SinglePair single_pair(Vec x0, Vec x1, double m0, double m1) {
  SinglePair s;
  s.a.points = PointMatrix(1, x0.size());
  s.a.points.row(0) = x0.transpose();
  s.a.weights = Vec::Constant(1, m0);
  s.b.points = PointMatrix(1, x1.size());
  s.b.points.row(0) = x1.transpose();
  s.b.weights = Vec::Constant(1, m1);
  s.semi = {SparseCoupling(1, 1, {{0, 0, m0}}), SparseCoupling(1, 1, {{0, 0, m1}}), {}, {}};
  return s;
}

TrainConfig small_config(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.hidden = 64;
  c.batch_size = 128;
  c.sigma = 0.1;
  return c;
}

}  // namespace

TEST_CASE("loss is zero when the model reproduces the targets") {
  const auto model = constant_model(2, Vec::Constant(2, 0.5), -0.25);
  std::vector<PathTarget> batch(5);
  for (int k = 0; k < 5; ++k) batch[k] = {0.1 * k, Vec::Constant(2, k), Vec::Constant(2, 0.5), -0.25, 1.0 + k};
  CHECK(cufm_loss(model, batch, 1.0) == 0.0);
}

TEST_CASE("unit velocity residual gives the mean mass") {
  const auto model = constant_model(1, Vec::Constant(1, 3.0), 0.7);
  std::vector<PathTarget> batch;
  double mean_m = 0.0;
  for (int k = 0; k < 7; ++k) {
    const double m = 0.2 + 0.3 * k;
    batch.push_back({0.1 * k, Vec::Constant(1, k - 3.0), Vec::Constant(1, 2.0), 0.7, m});
    mean_m += m / 7.0;
  }
  for (double kappa : {0.0, 1.0, 5.0}) CHECK(cufm_loss(model, batch, kappa) == doctest::Approx(mean_m).epsilon(1e-14));
}

TEST_CASE("kappa zero ignores the growth network") {
  std::mt19937_64 rng(1);
  const auto batch = random_batch(rng, 3, 20);
  FlowModel a(3, 3, 16, 4);
  FlowModel b = a;
  b.growth_net().parameters().setRandom();
  CHECK(cufm_loss(a, batch, 0.0) == cufm_loss(b, batch, 0.0));
  CHECK(cufm_loss(a, batch, 1.0) != cufm_loss(b, batch, 1.0));
}

TEST_CASE("property: loss is non-negative and linear in the sample mass") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto batch = random_batch(rng, 2, 12);
    const FlowModel model(2, 4, 16, trial);
    CHECK(cufm_loss(model, batch, 0.5) >= 0.0);

    auto doubled = batch;
    doubled[0].m *= 2.0;
    auto duplicated = batch;
    duplicated.push_back(batch[0]);
    const double a = cufm_loss(model, doubled, 0.5) * static_cast<double>(doubled.size());
    const double b = cufm_loss(model, duplicated, 0.5) * static_cast<double>(duplicated.size());
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
}

TEST_CASE("non-finite loss names the sample") {
  const auto model = constant_model(1, Vec::Zero(1), 0.0);
  std::vector<PathTarget> batch{{0.0, Vec::Zero(1), Vec::Zero(1), 0.0, 1.0},
                                {0.0, Vec::Zero(1), Vec::Constant(1, NAN), 0.0, 1.0}};
  try {
    cufm_loss(model, batch, 1.0);
    FAIL("expected a non-finite error");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("sample 1") != std::string::npos);
  }
  CHECK_THROWS_AS(cufm_loss(model, {}, 1.0), InvalidArgument);
}

TEST_CASE("gradient check") {
  std::mt19937_64 rng(3);
  SUBCASE("zero network and zero targets") {
    FlowModel model(2, 5, 32, 0);
    model.velocity_net().parameters().setZero();
    model.growth_net().parameters().setZero();
    auto batch = random_batch(rng, 2, 16);
    for (auto& p : batch) {
      p.u.setZero();
      p.g = 0.0;
    }
    CHECK(gradient_check(model, batch, 1.0) == 0.0);
  }
  SUBCASE("random models") {
    for (int trial = 0; trial < 5; ++trial) {
      const FlowModel model(3, 5, 32, 10 + trial);
      const auto batch = random_batch(rng, 3, 24);
      CHECK(gradient_check(model, batch, 1.0, 1e-5, 150, trial) < 1e-4);
    }
  }
  SUBCASE("step-size sweep has its minimum in the middle") {
    const FlowModel model(2, 5, 32, 77);
    const auto batch = random_batch(rng, 2, 24);
    const double coarse = gradient_check(model, batch, 1.0, 1e-3, 200, 5);
    const double mid = gradient_check(model, batch, 1.0, 1e-5, 200, 5);
    const double fine = gradient_check(model, batch, 1.0, 1e-7, 200, 5);
    CHECK(mid < coarse);
    CHECK(mid < fine);
  }
}

TEST_CASE("training batches rescale targets by the interval length") {
  Vec x0(1), x1(1);
  x0 << 0.0;
  x1 << 1.0;
  const auto pair = single_pair(x0, x1, 1.0, 2.0);
  const ExplicitSampler sampler(pair.semi, pair.a, pair.b);
  const PairSampler* samplers[] = {&sampler};
  TrainConfig cfg = small_config(1);
  cfg.time_points = {1.0, 3.0};
  cfg.sigma = 0.0;
  std::mt19937_64 rng(4);
  const auto batch = draw_training_batch(samplers, cfg, rng);
  REQUIRE(batch.size() == 128);
  const auto p = geodesic_constants(1.0, 2.0, x0, x1, cfg.delta);
  for (const auto& s : batch) {
    CHECK(s.t >= 1.0);
    CHECK(s.t <= 3.0);
    const double tn = (s.t - 1.0) / 2.0;
    const auto ref = conditional_targets(p, tn, s.x, 0.0);
    CHECK(s.u[0] == doctest::Approx(ref.u[0] / 2.0).epsilon(1e-9));
    CHECK(s.g == doctest::Approx(ref.g / 2.0).epsilon(1e-9));
    CHECK(s.m == doctest::Approx(ref.m).epsilon(1e-9));
    CHECK(s.x[0] == doctest::Approx(traveling_gaussian_mean(p, tn)[0]).epsilon(1e-9));
  }
}

TEST_CASE("death pairs keep t away from the vanishing endpoint") {
  DiscreteMeasure a, b;
  a.points = PointMatrix::Zero(1, 1);
  a.weights = Vec::Ones(1);
  b.points = PointMatrix::Constant(1, 1, 9.0);
  b.weights = Vec::Ones(1);
  const SemiCoupling semi{SparseCoupling(1, 1), SparseCoupling(1, 1), {0}, {0}};
  const ExplicitSampler sampler(semi, a, b);
  const PairSampler* samplers[] = {&sampler};
  std::mt19937_64 rng(5);
  auto cfg = small_config(1);
  cfg.batch_size = 2000;
  int deaths = 0, births = 0;
  for (const auto& s : draw_training_batch(samplers, cfg, rng)) {
    CHECK(std::isfinite(s.g));
    CHECK(s.m >= kMassFloor);
    if (s.x[0] < 4.5) {
      ++deaths;
      CHECK(s.t <= 1.0 - kEndpointMargin);
      CHECK(s.g < 0.0);
    } else {
      ++births;
      CHECK(s.t >= kEndpointMargin);
      CHECK(s.g > 0.0);
    }
  }
  CHECK(deaths > 800);
  CHECK(births > 800);
}

TEST_CASE("single pair training recovers the conditional field on the path") {
  Vec x0(2), x1(2);
  x0 << 0.0, 0.0;
  x1 << 1.0, 0.5;
  const auto pair = single_pair(x0, x1, 1.0, 1.0);
  const ExplicitSampler sampler(pair.semi, pair.a, pair.b);
  const PairSampler* samplers[] = {&sampler};
  const auto cfg = small_config(2000);
  const auto model = train(samplers, 2, cfg);
  const auto p = geodesic_constants(1.0, 1.0, x0, x1, cfg.delta);
  const Vec eta = traveling_gaussian_mean(p, 0.5);
  const auto target = conditional_targets(p, 0.5, eta, cfg.sigma);
  PointMatrix x(1, 2);
  x.row(0) = eta.transpose();
  PointMatrix v;
  Vec g;
  model.evaluate(x, Vec::Constant(1, 0.5), v, g);
  CHECK((v.row(0).transpose() - target.u).norm() <= 0.05 * target.u.norm());
  CHECK(std::abs(g[0] - target.g) <= 0.05);
}

TEST_CASE("stationary balanced data trains a vanishing growth field") {
  DiscreteMeasure a;
  a.points = PointMatrix(3, 2);
  a.points << 0.0, 0.0, 1.0, 0.0, 0.0, 1.0;
  a.weights = Vec::Ones(3);
  const SparseCoupling id(3, 3, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}});
  const ExplicitSampler sampler(SemiCoupling{id, id, {}, {}}, a, a);
  const PairSampler* samplers[] = {&sampler};
  const auto model = train(samplers, 2, small_config(1500));
  PointMatrix v;
  Vec g;
  for (double t : {0.1, 0.5, 0.9}) {
    model.evaluate(a.points, Vec::Constant(3, t), v, g);
    for (Index k = 0; k < 3; ++k) CHECK(std::abs(g[k]) < 0.05);
  }
}

TEST_CASE("training is reproducible for a fixed seed") {
  Vec x0(1), x1(1);
  x0 << 0.0;
  x1 << 2.0;
  const auto pair = single_pair(x0, x1, 1.0, 1.5);
  const ExplicitSampler sampler(pair.semi, pair.a, pair.b);
  const PairSampler* samplers[] = {&sampler};
  std::vector<double> a, b, c;
  auto cfg = small_config(30);
  const auto ma = train(samplers, 1, cfg, &a);
  const auto mb = train(samplers, 1, cfg, &b);
  cfg.seed = 1;
  train(samplers, 1, cfg, &c);
  REQUIRE(a.size() == 30);
  CHECK(a == b);
  CHECK(ma == mb);
  CHECK(a != c);
}

TEST_CASE("train validates its configuration") {
  Vec x(1);
  x << 0.0;
  const auto pair = single_pair(x, x, 1.0, 1.0);
  const ExplicitSampler sampler(pair.semi, pair.a, pair.b);
  const PairSampler* samplers[] = {&sampler};
  auto cfg = small_config(1);
  cfg.time_points = {0.0, 1.0, 2.0};
  CHECK_THROWS_AS(train(samplers, 1, cfg), InvalidArgument);
  cfg = small_config(1);
  cfg.time_points = {1.0, 1.0};
  CHECK_THROWS_AS(train(samplers, 1, cfg), InvalidArgument);
  cfg = small_config(1);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(samplers, 1, cfg), InvalidArgument);
  cfg = small_config(1);
  cfg.kappa = -1.0;
  CHECK_THROWS_AS(train(samplers, 1, cfg), InvalidArgument);
}

TEST_CASE("simulate examples") {
  Vec c(2);
  c << 0.3, -1.1;
  SimulatedPopulation start;
  start.particles = PointMatrix(2, 2);
  start.particles << 1.0, 2.0, -1.0, 0.5;
  start.masses = Vec::Constant(2, 0.5);
  for (int steps : {1, 7, 100}) {
    const auto end = simulate(constant_model(2, c, 0.0), start, 0.0, 1.0, steps);
    CHECK(end.time == 1.0);
    for (Index k = 0; k < 2; ++k) {
      CHECK(std::abs(end.particles(k, 0) - start.particles(k, 0) - c[0]) < 1e-12);
      CHECK(std::abs(end.particles(k, 1) - start.particles(k, 1) - c[1]) < 1e-12);
    }
    CHECK(end.masses == start.masses);
  }
  const auto grown = simulate(constant_model(2, Vec::Zero(2), 1.0), start, 0.0, 1.0, 10000);
  CHECK(std::abs(grown.masses.sum() / start.masses.sum() - std::exp(1.0)) < 1e-10);
  CHECK(grown.particles == start.particles);
  CHECK_THROWS_AS(simulate(constant_model(2, c, 0.0), start, 0.0, 1.0, 0), InvalidArgument);
  CHECK_THROWS_AS(simulate(constant_model(2, c, 800.0), start, 0.0, 1.0, 1), NonFiniteError);
}

TEST_CASE("Euler endpoint error shrinks at first order") {
  const FlowModel model(2, 4, 16, 9);
  SimulatedPopulation start;
  start.particles = PointMatrix::Random(5, 2);
  start.masses = Vec::Ones(5);
  const auto ref = simulate(model, start, 0.0, 1.0, 8000);
  const double e1 = (simulate(model, start, 0.0, 1.0, 500).particles - ref.particles).norm();
  const double e2 = (simulate(model, start, 0.0, 1.0, 1000).particles - ref.particles).norm();
  const double one_step = (simulate(model, start, 0.0, 1.0, 1).particles - ref.particles).norm();
  CHECK(e2 < e1);
  CHECK(e1 / e2 == doctest::Approx(2.0 * (1.0 - 1.0 / 16.0) / (1.0 - 1.0 / 8.0)).epsilon(0.1));
  CHECK(one_step > e1);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  const FlowModel model(3, 5, 24, 123);
  TrainConfig cfg = small_config(7);
  cfg.time_points = {0.0, 0.5, 1.25};
  cfg.finest_mode = FinestMode::Independent;
  cfg.delta = 0.1 + 0.2;
  cfg.epoch_mode = EpochMode::Pass;
  const auto path = (std::filesystem::temp_directory_path() / "wfrflow_ckpt_test.json").string();
  save_checkpoint(path, model, cfg);
  const auto [loaded, loaded_cfg] = load_checkpoint(path);
  CHECK(loaded == model);
  CHECK(loaded_cfg == cfg);
  std::ofstream(path) << "{\"format\": \"wfrflow-model\", \"dim\": 2}";
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  std::ofstream(path) << "not json";
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}

TEST_CASE("pass epochs run one update per batch of source points") {
  DiscreteMeasure a;
  a.points = PointMatrix::Random(300, 1);
  a.weights = Vec::Ones(300);
  std::vector<Triplet> id;
  for (Index i = 0; i < 300; ++i) id.push_back({i, i, 1.0});
  const SparseCoupling g(300, 300, id);
  const ExplicitSampler sampler(SemiCoupling{g, g, {}, {}}, a, a);
  const PairSampler* samplers[] = {&sampler};
  auto cfg = small_config(2);
  cfg.hidden = 8;
  std::vector<double> step_trace, pass_trace;
  const auto one = train(samplers, 1, cfg, &step_trace);
  cfg.epoch_mode = EpochMode::Pass;
  const auto many = train(samplers, 1, cfg, &pass_trace);
  CHECK(step_trace.size() == 2);
  CHECK(pass_trace.size() == 2);
  CHECK_FALSE(one == many);
  CHECK(parse_epoch_mode("pass") == EpochMode::Pass);
  CHECK_THROWS_AS(parse_epoch_mode("batch"), InvalidArgument);
}
