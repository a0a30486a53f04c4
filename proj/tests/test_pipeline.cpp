#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wfrflow/error.hpp"
#include "wfrflow/pipeline.hpp"

using namespace wfrflow;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(WFRFLOW_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

double sampler_fingerprint(const PairSampler& s) {
  double acc = 0.0;
  for (const auto& p : sample_pairs(s, 200, 9)) acc += p.x0.sum() + 3.0 * p.x1.sum() + 7.0 * p.m1;
  return acc;
}

}  // namespace

TEST_CASE("config round-trips through JSON and accepts overrides") {
  PipelineConfig c;
  c.data = "a.csv";
  c.train.epochs = 17;
  c.train.finest_mode = FinestMode::Independent;
  c.solver.method = SolverMethod::Sinkhorn;
  c.w1.max_support = 100;
  c.simulate_times = {0.5, 1.0};
  c.bench_scales = {1, 2};
  c.generate.kind = "crossing";
  c.generate.crossing.per_branch = 12;
  const nlohmann::json j = c;
  const auto back = j.get<PipelineConfig>();
  CHECK(nlohmann::json(back) == j);

  const auto o = config_from_json(j, {"train.epochs=3", "data=b.csv", "solver.tolerance=1e-7", "loo.held_out=2"});
  CHECK(o.train.epochs == 3);
  CHECK(o.data == "b.csv");
  CHECK(o.solver.tolerance == 1e-7);
  CHECK(o.held_out == 2);
  CHECK(o.generate.crossing.per_branch == 12);

  CHECK_THROWS_AS(config_from_json(j, {"train.epochs"}), InvalidArgument);
  CHECK_THROWS_AS(config_from_json(j, {"train.epochs=\"many\""}), ParseError);
  CHECK_THROWS_AS(config_from_json(j, {"train.finest_mode=\"dense\""}), InvalidArgument);
  CHECK_THROWS_AS(config_from_json(j, {"simulate.steps=0"}), InvalidArgument);
}

TEST_CASE("generate examples") {
  GenerateOptions g;
  g.multiscale.per_micro = 100;
  const auto d = generate_data(g);
  CHECK(d.table.rows() == 5400);
  CHECK(d.truth.size() == 2700);
  g.kind = "unbalanced";
  CHECK(generate_data(g).truth.empty());
  g.kind = "spiral";
  CHECK_THROWS_AS(generate_data(g), InvalidArgument);
}

TEST_CASE("benchmark couplings at N=100") {
  SyntheticSpec spec;
  spec.per_micro = 100;
  const auto data = generate_multiscale(spec);
  TrainConfig train;
  train.delta = 10.0;
  SUBCASE("sparse") {
    const auto set = couple_snapshots(data.table, data.prior, multiscale_config(train, {}));
    const auto r = evaluate_coupling(set, 0, data.truth, train.delta);
    CHECK(r.accuracy.point >= 0.99);
    CHECK(r.accuracy.micro == 1.0);
    CHECK(r.accuracy.macro == 1.0);
  }
  SUBCASE("independent") {
    train.finest_mode = FinestMode::Independent;
    const auto set = couple_snapshots(data.table, data.prior, multiscale_config(train, {}));
    CHECK(set.intervals[0].result.couplings.size() == 2);
    const auto r = evaluate_coupling(set, 0, data.truth, train.delta);
    CHECK(r.accuracy.micro == 1.0);
    CHECK(r.accuracy.macro == 1.0);
  }
}

TEST_CASE("an empty prior file matches the unsupervised run") {
  const auto toy = generate_unbalanced_toy(default_unbalanced_toy());
  std::istringstream empty("");
  const auto from_file = read_prior(empty);
  const auto mc = multiscale_config(TrainConfig{}, {});
  const auto a = couple_snapshots(toy.table, from_file, mc);
  const auto b = couple_snapshots(toy.table, TransitionPrior{}, mc);
  const auto ea = a.intervals[0].result.couplings.back().entries();
  const auto eb = b.intervals[0].result.couplings.back().entries();
  REQUIRE(ea.size() == eb.size());
  for (std::size_t k = 0; k < ea.size(); ++k) CHECK(ea[k].value == eb[k].value);
}

TEST_CASE("coupling sets round-trip through files") {
  const auto toy = generate_unbalanced_toy(default_unbalanced_toy());
  for (auto mode : {FinestMode::Sparse, FinestMode::Independent}) {
    TrainConfig t;
    t.finest_mode = mode;
    const auto set = couple_snapshots(toy.table, toy.prior, multiscale_config(t, {}));
    const auto dir = fresh_dir("wfrflow_couplings_test");
    save_coupling_set(dir.string(), set);
    const auto loaded = load_coupling_set(dir.string(), toy.table, {});
    const auto original = make_samplers(set, {});
    REQUIRE(loaded.samplers.size() == 1);
    CHECK(loaded.set.intervals[0].mode == mode);
    CHECK(sampler_fingerprint(*loaded.samplers[0]) == sampler_fingerprint(*original[0]));
    const auto a = finest_coupling(set, 0).entries();
    const auto b = finest_coupling(loaded.set, 0).entries();
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].value == b[k].value);
  }
  CHECK_THROWS_AS(load_coupling_set((fs::temp_directory_path() / "wfrflow_missing_dir").string(), toy.table, {}),
                  IoError);
}

TEST_CASE("leave-one-out rejects endpoints and interpolates a translation") {
  TranslationSeriesSpec spec;
  const auto series = generate_translation_series(spec);
  PipelineConfig c;
  c.train.delta = 3.0;
  c.train.hidden = 64;
  c.train.epochs = 500;
  c.w1.max_support = 4096;
  CHECK_THROWS_AS(leave_one_out(series.table, series.prior, c, 0), InvalidArgument);
  CHECK_THROWS_AS(leave_one_out(series.table, series.prior, c, 2), InvalidArgument);
  const auto r = leave_one_out(series.table, series.prior, c, 1);
  CHECK(r.time == 1.0);
  CHECK(r.w1_with_prior <= 0.2);
}

TEST_CASE("trained benchmark model reaches the next snapshot and is step-size stable") {
  SyntheticSpec spec;
  spec.per_micro = 100;
  const auto data = generate_multiscale(spec);
  TrainConfig train;
  train.delta = 10.0;
  train.hidden = 64;
  train.epochs = 1000;
  const auto set = couple_snapshots(data.table, data.prior, multiscale_config(train, {}));
  const auto samplers = make_samplers(set, {});
  const auto model = train_on(set, samplers, data.table, train);
  const auto coarse = simulate_from(model, data.table, 0, 1.0, 100);
  const auto fine = simulate_from(model, data.table, 0, 1.0, 200);
  W1Options o;
  o.max_support = 4096;
  const DiscreteMeasure pc{coarse.particles, coarse.masses}, pf{fine.particles, fine.masses};
  CHECK(w1_distance(pc, snapshot_at(data.table, 1).measure, o).distance <= 0.15);
  CHECK(std::abs(w1_distance(pc, snapshot_at(data.table, 1).measure, o).distance -
                 w1_distance(pf, snapshot_at(data.table, 1).measure, o).distance) < 1e-3);
}

TEST_CASE("command-line pipeline is reproducible and reports categorized errors") {
  const auto dir = fresh_dir("wfrflow_cli_test");
  const auto cfg = dir / "config.json";
  {
    std::ofstream out(cfg);
    out << nlohmann::json{{"data", (dir / "data.csv").string()},
                          {"priors", (dir / "prior.txt").string()},
                          {"output_dir", (dir / "out").string()},
                          {"generate", {{"kind", "unbalanced"}, {"seed", 3}}},
                          {"metrics", {{"max_support", 4096}}},
                          {"train", {{"delta", 2.0}, {"epochs", 30}, {"hidden", 16}}}}
               .dump();
  }
  const auto log = dir / "log.txt";
  const std::string c = "-c " + cfg.string() + " ";
  for (const char* sub : {"generate", "couple", "train", "simulate", "evaluate"}) {
    CAPTURE(sub);
    REQUIRE(run_cli(c + sub, log) == 0);
  }
  const auto data = slurp(dir / "data.csv");
  const auto model = slurp(dir / "out" / "model.json");
  const auto coupling = slurp(dir / "out" / "couplings" / "coupling_0.txt");
  const auto sim = slurp(dir / "out" / "simulated_0.csv");
  CHECK(slurp(dir / "out" / "evaluation.txt").find("t0.rme = ") != std::string::npos);
  for (const char* sub : {"generate", "couple", "train", "simulate"}) REQUIRE(run_cli(c + sub, log) == 0);
  CHECK(slurp(dir / "data.csv") == data);
  CHECK(slurp(dir / "out" / "model.json") == model);
  CHECK(slurp(dir / "out" / "couplings" / "coupling_0.txt") == coupling);
  CHECK(slurp(dir / "out" / "simulated_0.csv") == sim);

  CHECK(run_cli(c + "--data " + (dir / "missing.csv").string() + " couple", log) == 3);
  CHECK(slurp(log).rfind("error[io]: ", 0) == 0);
  CHECK(run_cli(c + "loo", log) == 2);
  CHECK(slurp(log).rfind("error[invalid-argument]: ", 0) == 0);
  CHECK(run_cli(c + "--set train.epochs=oops train", log) == 4);
  CHECK(run_cli(c + "frobnicate", log) != 0);
}
