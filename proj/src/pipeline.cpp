#include "wfrflow/pipeline.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "wfrflow/error.hpp"

namespace wfrflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("'" + path + "': " + e.what(), 0);
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void spec_from_json(const json& j, SyntheticSpec& s) {
  s.macro_offsets = j.value("macro_offsets", s.macro_offsets);
  s.micro_offsets = j.value("micro_offsets", s.micro_offsets);
  s.anchor_a = j.value("anchor_a", s.anchor_a);
  s.anchor_b = j.value("anchor_b", s.anchor_b);
  s.per_micro = j.value("per_micro", s.per_micro);
  s.sigma = j.value("sigma", s.sigma);
  s.translation = j.value("translation", s.translation);
}

json spec_to_json(const SyntheticSpec& s) {
  return {{"macro_offsets", s.macro_offsets}, {"micro_offsets", s.micro_offsets}, {"anchor_a", s.anchor_a},
          {"anchor_b", s.anchor_b},           {"per_micro", s.per_micro},         {"sigma", s.sigma},
          {"translation", s.translation}};
}

json components_to_json(const UnbalancedToySpec& s) {
  json arr = json::array();
  for (const auto& c : s.components)
    arr.push_back({{"mean0", c.mean0}, {"mean1", c.mean1}, {"sigma", c.sigma}, {"count0", c.count0},
                   {"count1", c.count1}});
  return {{"components", arr}};
}

void components_from_json(const json& j, UnbalancedToySpec& s) {
  if (!j.contains("components")) return;
  s.components.clear();
  for (const auto& c : j.at("components")) {
    ToyComponent t;
    t.mean0 = c.at("mean0").get<std::vector<double>>();
    t.mean1 = c.at("mean1").get<std::vector<double>>();
    t.sigma = c.value("sigma", t.sigma);
    t.count0 = c.value("count0", t.count0);
    t.count1 = c.value("count1", t.count1);
    s.components.push_back(std::move(t));
  }
}

json semi_indices(const std::vector<Index>& v) { return json(std::vector<long long>(v.begin(), v.end())); }

std::vector<Index> indices_from(const json& j) {
  const auto v = j.get<std::vector<long long>>();
  return {v.begin(), v.end()};
}

SnapshotTable drop_time(const SnapshotTable& table, std::size_t k) {
  const auto keep_out = table.rows_at(k);
  std::vector<char> dropped(static_cast<std::size_t>(table.rows()), 0);
  for (Index r : keep_out) dropped[static_cast<std::size_t>(r)] = 1;
  SnapshotTable out;
  const Index kept = table.rows() - static_cast<Index>(keep_out.size());
  out.x.resize(kept, table.dim());
  out.w.resize(kept);
  out.labels.assign(table.labels.size(), {});
  Index o = 0;
  for (Index r = 0; r < table.rows(); ++r) {
    if (dropped[static_cast<std::size_t>(r)]) continue;
    out.x.row(o) = table.x.row(r);
    out.w[o] = table.w[r];
    out.t.push_back(table.t[static_cast<std::size_t>(r)]);
    for (std::size_t l = 0; l < table.labels.size(); ++l) out.labels[l].push_back(table.labels[l][static_cast<std::size_t>(r)]);
    ++o;
  }
  return out;
}

}  // namespace

GeneratedData generate_data(const GenerateOptions& o) {
  GeneratedData out;
  if (o.kind == "multiscale") {
    auto d = generate_multiscale(o.multiscale);
    out = {std::move(d.table), std::move(d.prior), std::move(d.truth)};
  } else if (o.kind == "unbalanced") {
    auto d = generate_unbalanced_toy(o.unbalanced);
    out.table = std::move(d.table);
    out.prior = std::move(d.prior);
  } else if (o.kind == "crossing") {
    auto d = generate_crossing_toy(o.crossing);
    out.table = std::move(d.table);
    out.prior = std::move(d.prior);
  } else if (o.kind == "translation") {
    auto d = generate_translation_series(o.translation);
    out.table = std::move(d.table);
    out.prior = std::move(d.prior);
  } else {
    throw InvalidArgument("unknown generator '" + o.kind + "' (expected multiscale, unbalanced, crossing or translation)");
  }
  return out;
}

void to_json(json& j, const SolverOptions& o) {
  j = {{"method", to_string(o.method)},
       {"initial_eps", o.initial_eps},
       {"final_eps", o.final_eps},
       {"eps_decay", o.eps_decay},
       {"tolerance", o.tolerance},
       {"max_iters", o.max_iters},
       {"threads", o.threads},
       {"dense_newton_limit", o.dense_newton_limit},
       {"row_floor_scale", o.row_floor_scale}};
}

void from_json(const json& j, SolverOptions& o) {
  const SolverOptions d;
  o.method = parse_solver_method(j.value("method", std::string(to_string(d.method))));
  o.initial_eps = j.value("initial_eps", d.initial_eps);
  o.final_eps = j.value("final_eps", d.final_eps);
  o.eps_decay = j.value("eps_decay", d.eps_decay);
  o.tolerance = j.value("tolerance", d.tolerance);
  o.max_iters = j.value("max_iters", d.max_iters);
  o.threads = j.value("threads", d.threads);
  o.dense_newton_limit = j.value("dense_newton_limit", d.dense_newton_limit);
  o.row_floor_scale = j.value("row_floor_scale", d.row_floor_scale);
}

void to_json(json& j, const PipelineConfig& c) {
  const auto& g = c.generate;
  j = {{"data", c.data},
       {"priors", c.priors},
       {"truth", c.truth},
       {"output_dir", c.output_dir},
       {"train", c.train},
       {"solver", c.solver},
       {"metrics", {{"max_support", c.w1.max_support}, {"seed", c.w1.seed}}},
       {"simulate", {{"steps", c.simulate_steps}, {"times", c.simulate_times}}},
       {"loo", {{"held_out", c.held_out}}},
       {"bench", {{"base", c.bench_base}, {"scales", c.bench_scales}, {"repeats", c.bench_repeats}}},
       {"generate",
        {{"kind", g.kind},
         {"seed", g.multiscale.seed},
         {"multiscale", spec_to_json(g.multiscale)},
         {"unbalanced", components_to_json(g.unbalanced)},
         {"crossing",
          {{"per_branch", g.crossing.per_branch},
           {"sigma", g.crossing.sigma},
           {"length", g.crossing.length},
           {"separation", g.crossing.separation}}},
         {"translation",
          {{"clusters", g.translation.clusters},
           {"per_cluster", g.translation.per_cluster},
           {"sigma", g.translation.sigma},
           {"times", g.translation.times},
           {"velocity", g.translation.velocity}}}}}};
}

void from_json(const json& j, PipelineConfig& c) {
  c = PipelineConfig{};
  c.data = j.value("data", c.data);
  c.priors = j.value("priors", c.priors);
  c.truth = j.value("truth", c.truth);
  c.output_dir = j.value("output_dir", c.output_dir);
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  if (j.contains("solver")) c.solver = j.at("solver").get<SolverOptions>();
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    c.w1.max_support = m.value("max_support", c.w1.max_support);
    c.w1.seed = m.value("seed", c.w1.seed);
  }
  if (j.contains("simulate")) {
    const auto& s = j.at("simulate");
    c.simulate_steps = s.value("steps", c.simulate_steps);
    c.simulate_times = s.value("times", c.simulate_times);
  }
  if (j.contains("loo")) c.held_out = j.at("loo").value("held_out", c.held_out);
  if (j.contains("bench")) {
    const auto& b = j.at("bench");
    c.bench_base = b.value("base", c.bench_base);
    c.bench_scales = b.value("scales", c.bench_scales);
    c.bench_repeats = b.value("repeats", c.bench_repeats);
  }
  if (j.contains("generate")) {
    const auto& g = j.at("generate");
    auto& o = c.generate;
    o.kind = g.value("kind", o.kind);
    const std::uint64_t seed = g.value("seed", std::uint64_t{0});
    o.multiscale.seed = o.unbalanced.seed = o.crossing.seed = o.translation.seed = seed;
    if (g.contains("multiscale")) spec_from_json(g.at("multiscale"), o.multiscale);
    if (g.contains("unbalanced")) components_from_json(g.at("unbalanced"), o.unbalanced);
    if (g.contains("crossing")) {
      const auto& x = g.at("crossing");
      o.crossing.per_branch = x.value("per_branch", o.crossing.per_branch);
      o.crossing.sigma = x.value("sigma", o.crossing.sigma);
      o.crossing.length = x.value("length", o.crossing.length);
      o.crossing.separation = x.value("separation", o.crossing.separation);
    }
    if (g.contains("translation")) {
      const auto& x = g.at("translation");
      o.translation.clusters = x.value("clusters", o.translation.clusters);
      o.translation.per_cluster = x.value("per_cluster", o.translation.per_cluster);
      o.translation.sigma = x.value("sigma", o.translation.sigma);
      o.translation.times = x.value("times", o.translation.times);
      o.translation.velocity = x.value("velocity", o.translation.velocity);
    }
  }
  if (c.simulate_steps < 1) throw InvalidArgument("simulate.steps must be at least 1");
  if (c.w1.max_support < 1) throw InvalidArgument("metrics.max_support must be at least 1");
  if (c.bench_base < 1 || c.bench_repeats < 1) throw InvalidArgument("bench.base and bench.repeats must be positive");
  for (int s : c.bench_scales)
    if (s < 1) throw InvalidArgument("bench.scales entries must be positive");
}

PipelineConfig config_from_json(json j, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("override '" + o + "' is not key=value");
    std::string key = o.substr(0, eq);
    const std::string text = o.substr(eq + 1);
    std::replace(key.begin(), key.end(), '.', '/');
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    j[json::json_pointer("/" + key)] = value;
  }
  try {
    return j.get<PipelineConfig>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what(), 0);
  }
}

PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  return config_from_json(path.empty() ? json::object() : read_json_file(path), overrides);
}

MultiscaleConfig multiscale_config(const TrainConfig& train, const SolverOptions& solver) {
  MultiscaleConfig m;
  m.delta = train.delta;
  m.finest_mode = train.finest_mode;
  m.epsilon = {train.epsilon};
  m.solver = solver;
  return m;
}

std::vector<HierarchyView> snapshot_views(const SnapshotTable& table) {
  std::vector<HierarchyView> views;
  const auto times = table.time_points();
  for (std::size_t k = 0; k < times.size(); ++k) {
    auto snap = snapshot_at(table, k);
    views.push_back(build_hierarchy(snap.measure, snap.labels));
  }
  return views;
}

CouplingSet couple_snapshots(const SnapshotTable& table, const TransitionPrior& prior, const MultiscaleConfig& config) {
  auto start = std::chrono::steady_clock::now();
  CouplingSet set;
  set.views = snapshot_views(table);
  set.hierarchy_seconds = seconds_since(start);
  start = std::chrono::steady_clock::now();
  if (set.views.size() < 2) throw InvalidArgument("coupling needs at least two time points");
  const int L = set.views.front().num_levels();
  for (std::size_t k = 0; k + 1 < set.views.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    IntervalCoupling ic;
    ic.mode = config.finest_mode;
    try {
      ic.result = solve_multiscale(set.views[k], set.views[k + 1], prior, config);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("interval " + std::to_string(k) + ", " + e.what(), e.residual());
    } catch (const EmptySupportError& e) {
      throw EmptySupportError("interval " + std::to_string(k) + ", " + e.what());
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("interval " + std::to_string(k) + ", " + e.what());
    }
    if (ic.mode == FinestMode::Sparse) {
      ic.semi = extract_semi_coupling(ic.result.couplings.back(), set.views[k].measure().weights,
                                      set.views[k + 1].measure().weights, config.solver);
    } else {
      ic.semi = extract_semi_coupling(ic.result.couplings.back(), set.views[k].level(L - 1).weights,
                                      set.views[k + 1].level(L - 1).weights, config.solver);
    }
    ic.seconds = seconds_since(t0);
    set.intervals.push_back(std::move(ic));
  }
  set.seconds = seconds_since(start);
  return set;
}

std::vector<std::unique_ptr<PairSampler>> make_samplers(const CouplingSet& set, const SolverOptions& solver) {
  std::vector<std::unique_ptr<PairSampler>> out;
  for (std::size_t k = 0; k < set.intervals.size(); ++k) {
    const auto& ic = set.intervals[k];
    const auto& src = set.views[k];
    const auto& tgt = set.views[k + 1];
    if (ic.mode == FinestMode::Sparse)
      out.push_back(std::make_unique<ExplicitSampler>(ic.semi, src.measure(), tgt.measure(), solver));
    else
      out.push_back(std::make_unique<LiftedSampler>(ic.result.couplings.back(), src, tgt, solver));
  }
  return out;
}

SparseCoupling finest_coupling(const CouplingSet& set, std::size_t k) {
  const auto& ic = set.intervals.at(k);
  if (ic.result.couplings.empty()) throw InvalidArgument("interval " + std::to_string(k) + " has no coupling");
  if (ic.mode == FinestMode::Sparse) return ic.result.couplings.back();
  return lift_coupling(ic.result.couplings.back(), set.views[k], set.views[k + 1]);
}

CouplingReport evaluate_coupling(const CouplingSet& set, std::size_t k, const std::vector<Index>& truth, double delta,
                                 int threads) {
  const auto& src = set.views.at(k);
  const auto& tgt = set.views.at(k + 1);
  if (static_cast<Index>(truth.size()) != src.measure().size())
    throw InvalidArgument("truth pairing has " + std::to_string(truth.size()) + " entries for " +
                          std::to_string(src.measure().size()) + " source points");
  const auto gamma = finest_coupling(set, k);
  const auto truth_gamma = truth_coupling(truth, tgt.measure().size());

  const int L = tgt.num_levels();
  const Index n1 = tgt.measure().size();
  auto labels_at = [&](int level) {
    std::vector<std::string> names(static_cast<std::size_t>(n1));
    for (Index j = 0; j < n1; ++j)
      names[static_cast<std::size_t>(j)] = level < L ? tgt.level(level).names[tgt.level(level).assignment[j]]
                                                     : std::to_string(j);
    return names;
  };
  const int micro_level = std::max(1, L - 1);

  CouplingReport r;
  r.objective_gap = objective_gap(gamma, truth_gamma, src.measure(), tgt.measure(), delta, threads);
  r.accuracy = assignment_accuracy(gamma, truth, labels_at(micro_level), labels_at(1), src.measure().weights);
  r.wall_time_seconds = set.intervals[k].seconds;
  return r;
}

void save_coupling(const std::string& path, const SparseCoupling& gamma) { write_triplets(path, gamma); }

SparseCoupling load_coupling(const std::string& path, Index rows, Index cols) {
  auto m = read_triplets_file(path);
  if (m.rows() != rows || m.cols() != cols)
    throw ParseError("'" + path + "' has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         ", expected " + std::to_string(rows) + "x" + std::to_string(cols),
                     0);
  return SparseCoupling(std::move(m));
}

void save_coupling_set(const std::string& dir, const CouplingSet& set) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
  json intervals = json::array();
  for (std::size_t k = 0; k < set.intervals.size(); ++k) {
    const auto& ic = set.intervals[k];
    const std::string idx = std::to_string(k);
    const int level = static_cast<int>(ic.result.couplings.size());
    json entry{{"interval", k},
               {"mode", to_string(ic.mode)},
               {"level", level},
               {"coupling", "coupling_" + idx + ".txt"},
               {"gamma0", "gamma0_" + idx + ".txt"},
               {"gamma1", "gamma1_" + idx + ".txt"},
               {"death_rows", semi_indices(ic.semi.death_rows)},
               {"birth_cols", semi_indices(ic.semi.birth_cols)}};
    json reports = json::array();
    for (const auto& rep : ic.result.reports)
      reports.push_back({{"level", rep.level},
                         {"mask_size", rep.mask_size},
                         {"iterations", rep.stats.iterations},
                         {"residual", rep.stats.residual},
                         {"components", rep.stats.components},
                         {"support", rep.stats.support}});
    entry["levels"] = reports;
    save_coupling(join(dir, entry["coupling"]), ic.result.couplings.back());
    save_coupling(join(dir, entry["gamma0"]), ic.semi.gamma0);
    save_coupling(join(dir, entry["gamma1"]), ic.semi.gamma1);
    intervals.push_back(entry);
  }
  write_json_file(join(dir, "couplings.json"),
                  {{"format", "wfrflow-couplings"}, {"version", 1}, {"intervals", intervals}});
}

LoadedCouplings load_coupling_set(const std::string& dir, const SnapshotTable& table, const SolverOptions& solver) {
  const std::string manifest = join(dir, "couplings.json");
  const json j = read_json_file(manifest);
  LoadedCouplings out;
  try {
    if (j.value("format", std::string()) != "wfrflow-couplings")
      throw ParseError("'" + manifest + "' is not a coupling manifest", 0);
    out.set.views = snapshot_views(table);
    const auto& intervals = j.at("intervals");
    if (intervals.size() + 1 != out.set.views.size())
      throw ParseError("'" + manifest + "' lists " + std::to_string(intervals.size()) + " intervals for " +
                           std::to_string(out.set.views.size()) + " time points",
                       0);
    for (std::size_t k = 0; k < intervals.size(); ++k) {
      const auto& e = intervals[k];
      IntervalCoupling ic;
      ic.mode = parse_finest_mode(e.at("mode").get<std::string>());
      const int level = e.at("level").get<int>();
      const auto& src = out.set.views[k];
      const auto& tgt = out.set.views[k + 1];
      if (level < 1 || level > src.num_levels())
        throw ParseError("interval " + std::to_string(k) + " level " + std::to_string(level) + " is out of range", 0);
      const Index rows = src.level(level).size();
      const Index cols = tgt.level(level).size();
      ic.result.couplings.resize(static_cast<std::size_t>(level));
      ic.result.couplings.back() = load_coupling(join(dir, e.at("coupling").get<std::string>()), rows, cols);
      ic.semi.gamma0 = load_coupling(join(dir, e.at("gamma0").get<std::string>()), rows, cols);
      ic.semi.gamma1 = load_coupling(join(dir, e.at("gamma1").get<std::string>()), rows, cols);
      ic.semi.death_rows = indices_from(e.at("death_rows"));
      ic.semi.birth_cols = indices_from(e.at("birth_cols"));
      out.set.intervals.push_back(std::move(ic));
    }
  } catch (const json::exception& e) {
    throw ParseError("'" + manifest + "': " + e.what(), 0);
  }
  out.samplers = make_samplers(out.set, solver);
  return out;
}

FlowModel train_on(const CouplingSet& set, const std::vector<std::unique_ptr<PairSampler>>& samplers,
                   const SnapshotTable& table, TrainConfig config, std::vector<double>* loss_trace) {
  config.time_points = table.time_points();
  if (samplers.size() + 1 != config.time_points.size() || set.intervals.size() != samplers.size())
    throw InvalidArgument("sampler count does not match the number of intervals");
  std::vector<const PairSampler*> ptrs;
  for (const auto& s : samplers) ptrs.push_back(s.get());
  return train(ptrs, table.dim(), config, loss_trace);
}

SimulatedPopulation simulate_from(const FlowModel& model, const SnapshotTable& table, std::size_t from, double time,
                                  int steps) {
  auto snap = snapshot_at(table, from);
  SimulatedPopulation init{snap.measure.points, snap.measure.weights, snap.time};
  return simulate(model, init, snap.time, time, steps);
}

SnapshotTable population_table(const SimulatedPopulation& pop) {
  SnapshotTable t;
  t.x = pop.particles;
  t.t.assign(static_cast<std::size_t>(pop.particles.rows()), pop.time);
  t.w = pop.masses;
  return t;
}

LooResult leave_one_out(const SnapshotTable& table, const TransitionPrior& prior, const PipelineConfig& config,
                        int held_out) {
  const auto times = table.time_points();
  if (times.size() < 3) throw InvalidArgument("leave-one-out needs at least three time points");
  if (held_out <= 0 || held_out >= static_cast<int>(times.size()) - 1)
    throw InvalidArgument("held-out index " + std::to_string(held_out) + " must be an interior time point (1.." +
                          std::to_string(times.size() - 2) + ")");
  const auto k = static_cast<std::size_t>(held_out);
  const SnapshotTable reduced = drop_time(table, k);
  const auto reference = snapshot_at(table, k).measure;
  const auto mcfg = multiscale_config(config.train, config.solver);

  auto run = [&](const TransitionPrior& p) {
    const auto set = couple_snapshots(reduced, p, mcfg);
    const auto samplers = make_samplers(set, config.solver);
    const auto model = train_on(set, samplers, reduced, config.train);
    const auto pop = simulate_from(model, reduced, k - 1, times[k], config.simulate_steps);
    return w1_distance(DiscreteMeasure{pop.particles, pop.masses}, reference, config.w1).distance;
  };
  LooResult r;
  r.held_out = held_out;
  r.time = times[k];
  r.w1_with_prior = run(prior);
  r.w1_without_prior = run(TransitionPrior{});
  return r;
}

std::vector<BenchRow> scaling_bench(const PipelineConfig& config) {
  std::vector<BenchRow> rows;
  TrainConfig train = config.train;
  train.finest_mode = FinestMode::Independent;
  const auto mcfg = multiscale_config(train, config.solver);
  for (int scale : config.bench_scales) {
    SyntheticSpec spec = config.generate.multiscale;
    spec.per_micro = config.bench_base * scale;
    const auto data = generate_multiscale(spec);
    BenchRow row;
    row.scale = scale;
    row.points = static_cast<Index>(data.table.rows_at(0).size());
    CouplingSet set;
    std::vector<std::unique_ptr<PairSampler>> samplers;
    row.hierarchy_seconds = row.couple_seconds = INFINITY;
    for (int r = 0; r < config.bench_repeats; ++r) {
      set = couple_snapshots(data.table, data.prior, mcfg);
      const auto start = std::chrono::steady_clock::now();
      samplers = make_samplers(set, config.solver);
      row.hierarchy_seconds = std::min(row.hierarchy_seconds, set.hierarchy_seconds);
      row.couple_seconds = std::min(row.couple_seconds, set.seconds + seconds_since(start));
    }
    const auto start = std::chrono::steady_clock::now();
    train_on(set, samplers, data.table, train);
    row.train_seconds = seconds_since(start);
    row.fraction = row.couple_seconds / (row.hierarchy_seconds + row.couple_seconds + row.train_seconds);
    row.peak_rss_kb = peak_rss_kb();
    rows.push_back(row);
  }
  return rows;
}

long peak_rss_kb() {
  rusage u{};
  if (getrusage(RUSAGE_SELF, &u) != 0) return 0;
  return u.ru_maxrss;
}

}  // namespace wfrflow
