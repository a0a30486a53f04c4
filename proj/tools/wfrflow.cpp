// wfrflow: generate, couple, train, simulate, evaluate, loo, bench.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "wfrflow/error.hpp"
#include "wfrflow/pipeline.hpp"

namespace fs = std::filesystem;
using namespace wfrflow;

namespace {

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::string> data, priors, truth, output;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, threads, held_out;
  std::optional<std::string> mode;
  std::optional<double> delta;
};

PipelineConfig resolve(const Flags& f) {
  std::vector<std::string> o = f.sets;
  auto quoted = [](const std::string& s) { return nlohmann::json(s).dump(); };
  if (f.data) o.push_back("data=" + quoted(*f.data));
  if (f.priors) o.push_back("priors=" + quoted(*f.priors));
  if (f.truth) o.push_back("truth=" + quoted(*f.truth));
  if (f.output) o.push_back("output_dir=" + quoted(*f.output));
  if (f.seed) o.push_back("train.seed=" + std::to_string(*f.seed));
  if (f.epochs) o.push_back("train.epochs=" + std::to_string(*f.epochs));
  if (f.threads) o.push_back("solver.threads=" + std::to_string(*f.threads));
  if (f.held_out) o.push_back("loo.held_out=" + std::to_string(*f.held_out));
  if (f.mode) o.push_back("train.finest_mode=" + quoted(*f.mode));
  if (f.delta) o.push_back("train.delta=" + nlohmann::json(*f.delta).dump());
  return load_config(f.config, o);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
}

std::string in_dir(const PipelineConfig& c, const std::string& name) { return (fs::path(c.output_dir) / name).string(); }

TransitionPrior load_prior(const PipelineConfig& c) {
  return c.priors.empty() ? TransitionPrior{} : read_prior_file(c.priors);
}

std::vector<double> target_times(const PipelineConfig& c, const SnapshotTable& table) {
  if (!c.simulate_times.empty()) return c.simulate_times;
  auto times = table.time_points();
  times.erase(times.begin());
  return times;
}

std::string simulated_name(std::size_t i) { return "simulated_" + std::to_string(i) + ".csv"; }

void cmd_generate(const PipelineConfig& c) {
  const auto g = generate_data(c.generate);
  const fs::path data(c.data);
  if (data.has_parent_path()) ensure_dir(data.parent_path().string());
  save_snapshots(c.data, g.table);
  std::cout << "data = " << c.data << " (" << g.table.rows() << " rows)\n";
  if (!c.priors.empty()) {
    write_prior_file(c.priors, g.prior);
    std::cout << "priors = " << c.priors << "\n";
  }
  if (!c.truth.empty() && !g.truth.empty()) {
    save_pairing(c.truth, g.truth);
    std::cout << "truth = " << c.truth << "\n";
  }
}

void cmd_couple(const PipelineConfig& c) {
  const auto table = load_snapshots(c.data);
  const auto prior = load_prior(c);
  const auto set = couple_snapshots(table, prior, multiscale_config(c.train, c.solver));
  const std::string dir = in_dir(c, "couplings");
  save_coupling_set(dir, set);
  std::cout << "couplings = " << dir << "\n";
  std::cout << "mode = " << to_string(c.train.finest_mode) << "\n";
  std::cout << "hierarchy_seconds = " << set.hierarchy_seconds << "\n";
  std::cout << "coupling_seconds = " << set.seconds << "\n";
  std::cout << "peak_rss_kb = " << peak_rss_kb() << "\n";
  for (std::size_t k = 0; k < set.intervals.size(); ++k)
    for (const auto& rep : set.intervals[k].result.reports)
      std::cout << "interval " << k << " level " << rep.level << ": mask " << rep.mask_size << ", iterations "
                << rep.stats.iterations << ", residual " << rep.stats.residual << "\n";
  if (!c.truth.empty()) {
    const auto truth = load_pairing(c.truth);
    const auto report = evaluate_coupling(set, 0, truth, c.train.delta, c.solver.threads);
    write_report(std::cout, report);
    append_report_row(in_dir(c, "results.csv"), std::string("couple-") + to_string(c.train.finest_mode), report);
  }
}

void cmd_train(const PipelineConfig& c) {
  const auto table = load_snapshots(c.data);
  const auto loaded = load_coupling_set(in_dir(c, "couplings"), table, c.solver);
  std::vector<double> trace;
  TrainConfig cfg = c.train;
  cfg.time_points = table.time_points();
  const auto model = train_on(loaded.set, loaded.samplers, table, cfg, &trace);
  save_checkpoint(in_dir(c, "model.json"), model, cfg);
  write_loss_trace(in_dir(c, "loss.txt"), trace);
  std::cout << "model = " << in_dir(c, "model.json") << "\n";
  std::cout << "loss_trace = " << in_dir(c, "loss.txt") << "\n";
  if (!trace.empty()) std::cout << "final_loss = " << trace.back() << "\n";
}

void cmd_simulate(const PipelineConfig& c) {
  const auto table = load_snapshots(c.data);
  const auto [model, cfg] = load_checkpoint(in_dir(c, "model.json"));
  const auto times = target_times(c, table);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const auto pop = simulate_from(model, table, 0, times[i], c.simulate_steps);
    save_snapshots(in_dir(c, simulated_name(i)), population_table(pop));
    std::cout << "t = " << times[i] << ": " << in_dir(c, simulated_name(i)) << "\n";
  }
}

void cmd_evaluate(const PipelineConfig& c) {
  const auto table = load_snapshots(c.data);
  const auto snaps = table.time_points();
  const auto times = target_times(c, table);
  std::ostringstream report;
  for (std::size_t i = 0; i < times.size(); ++i) {
    std::size_t k = snaps.size();
    for (std::size_t s = 0; s < snaps.size(); ++s)
      if (snaps[s] == times[i]) k = s;
    if (k == snaps.size()) continue;
    const auto pred = load_snapshots(in_dir(c, simulated_name(i)));
    const DiscreteMeasure pm{pred.x, pred.w};
    const auto ref = snapshot_at(table, k).measure;
    const auto w1 = w1_distance(pm, ref, c.w1);
    const SimulatedPopulation pop{pred.x, pred.w, times[i]};
    report << "t" << i << ".time = " << times[i] << "\n";
    report << "t" << i << ".w1 = " << w1.distance << "\n";
    report << "t" << i << ".w1_subsampled = " << (w1.subsampled ? "true" : "false") << "\n";
    report << "t" << i << ".w1_seed = " << w1.seed << "\n";
    report << "t" << i << ".rme = " << relative_mass_error(pop, ref) << "\n";
  }
  if (!c.truth.empty() && fs::exists(in_dir(c, "couplings/couplings.json"))) {
    const auto loaded = load_coupling_set(in_dir(c, "couplings"), table, c.solver);
    auto r = evaluate_coupling(loaded.set, 0, load_pairing(c.truth), c.train.delta, c.solver.threads);
    write_report(report, r);
  }
  std::ofstream out(in_dir(c, "evaluation.txt"));
  if (!out) throw IoError("cannot write '" + in_dir(c, "evaluation.txt") + "'");
  out << report.str();
  std::cout << report.str();
}

void cmd_loo(const PipelineConfig& c) {
  const auto table = load_snapshots(c.data);
  const auto r = leave_one_out(table, load_prior(c), c, c.held_out);
  std::cout << "held_out time w1_with_prior w1_without_prior\n";
  std::cout << r.held_out << ' ' << r.time << ' ' << r.w1_with_prior << ' ' << r.w1_without_prior << "\n";
}

void cmd_bench(const PipelineConfig& c) {
  ensure_dir(c.output_dir);
  const auto rows = scaling_bench(c);
  std::ofstream csv(in_dir(c, "bench.csv"));
  if (!csv) throw IoError("cannot write '" + in_dir(c, "bench.csv") + "'");
  const char* header = "scale,points,hierarchy_seconds,couple_seconds,train_seconds,fraction,peak_rss_kb\n";
  csv << header;
  std::cout << header;
  for (const auto& r : rows) {
    std::ostringstream line;
    line << r.scale << ',' << r.points << ',' << r.hierarchy_seconds << ',' << r.couple_seconds << ',' << r.train_seconds << ',' << r.fraction << ','
         << r.peak_rss_kb << '\n';
    csv << line.str();
    std::cout << line.str();
  }
}

int exit_code(const char* category) {
  static const std::map<std::string, int> codes{{"invalid-argument", 2}, {"io", 3},         {"parse", 4},
                                                {"convergence", 5},      {"empty-support", 6}, {"mass-floor", 7},
                                                {"non-finite", 8}};
  const auto it = codes.find(category);
  return it == codes.end() ? 1 : it->second;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coarse-to-fine unbalanced couplings and flow-matched dynamics for snapshot data"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("-c,--config", f.config, "JSON pipeline config")->check(CLI::ExistingFile);
  app.add_option("--set", f.sets, "Override a config field, e.g. train.epochs=100");
  app.add_option("--data", f.data, "Snapshot CSV");
  app.add_option("--priors", f.priors, "Transition prior file");
  app.add_option("--truth", f.truth, "Ground-truth pairing CSV");
  app.add_option("-o,--output", f.output, "Output directory");
  app.add_option("--seed", f.seed, "Training seed");
  app.add_option("--epochs", f.epochs, "Training epochs");
  app.add_option("--threads", f.threads, "Solver threads");
  app.add_option("--mode", f.mode, "Finest mode: sparse or independent");
  app.add_option("--delta", f.delta, "WFR length scale");
  app.add_option("--held-out", f.held_out, "Leave-one-out time index");
  app.fallthrough();

  const std::map<std::string, void (*)(const PipelineConfig&)> commands{
      {"generate", cmd_generate}, {"couple", cmd_couple}, {"train", cmd_train}, {"simulate", cmd_simulate},
      {"evaluate", cmd_evaluate}, {"loo", cmd_loo},       {"bench", cmd_bench}};
  const std::map<std::string, std::string> help{
      {"generate", "Write a synthetic snapshot table, prior and pairing"},
      {"couple", "Solve multiscale couplings for each interval"},
      {"train", "Train velocity and growth networks on saved couplings"},
      {"simulate", "Transport the first snapshot to the requested times"},
      {"evaluate", "W1, mass error and coupling metrics"},
      {"loo", "Leave one interior time point out, with and without priors"},
      {"bench", "Independent-mode coupling versus training time across scales"}};
  for (const auto& [name, fn] : commands) app.add_subcommand(name, help.at(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto config = resolve(f);
    ensure_dir(config.output_dir);
    for (const auto* sub : app.get_subcommands()) commands.at(sub->get_name())(config);
  } catch (const Error& e) {
    std::cerr << "error[" << e.category() << "]: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
