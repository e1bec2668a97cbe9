#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "redoff/redoff.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace redoff;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  return config::parse_json(csv::read_file(path), path);
}

std::string out_path(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  return (fs::path(dir) / name).string();
}

void write_out(const std::string& dir, const std::string& name, const std::string& content) {
  const auto p = out_path(dir, name);
  csv::write_file(p, content);
  std::cout << "wrote " << p << "\n";
}

// Shared by the training verbs: which catalog, whether to refit it, and
// where the train/test split falls.
struct TrainingData {
  TraceDataset train;
  TraceDataset test;
  FeatureCatalog catalog;
};

TrainingData split_trace(const TraceDataset& full, config::ObjectReader& r, const json& cfg) {
  double fraction = 0.8;
  bool fit = true;
  FeatureCatalog catalog = compact_catalog();
  r.get("train_fraction", fraction);
  r.get("fit_catalog", fit);
  if (r.has("catalog")) catalog = config::catalog_from_json(cfg.at("catalog"));
  require(fraction > 0.0 && fraction <= 1.0, ErrorKind::kConfig, "train_fraction must lie in (0,1]");
  auto split = static_cast<std::int64_t>(static_cast<double>(full.n_tasks()) * fraction);
  split = std::clamp<std::int64_t>(split, 1, full.n_tasks());
  TrainingData d{full.slice(0, split), split < full.n_tasks() ? full.slice(split, full.n_tasks()) : TraceDataset{},
                 catalog};
  if (fit) d.catalog = catalog.fitted(d.train, 0, d.train.n_tasks());
  return d;
}

int cmd_gen(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::int64_t> tasks,
            const std::string& out_dir) {
  const auto j = read_config(config_path);
  auto cfg = config::synthetic_from_json(j);
  if (seed) cfg.seed = *seed;
  if (tasks) cfg.n_tasks = *tasks;
  validate(cfg);
  const auto trace = generate_synthetic(cfg);
  write_out(out_dir, "trace.csv", trace_to_string(trace));
  write_out(out_dir, "synthetic.json", config::to_json(cfg).dump(2) + "\n");
  return kExitOk;
}

int cmd_stats(const std::string& trace_path, double delta_star, bool relevance, const std::string& out_dir) {
  const auto trace = load_trace(trace_path);
  write_out(out_dir, "stats.csv", stats_to_csv(trace_stats(trace)));
  write_out(out_dir, "cdf.csv", cdf_compare(delay_series(trace)));
  if (relevance) {
    const auto catalog = default_catalog().fitted(trace, 0, trace.n_tasks());
    const auto split = (trace.n_tasks() - 1) * 4 / 5;
    const auto tr = exceedance_design(trace, catalog, delta_star, 0, split);
    const auto va = exceedance_design(trace, catalog, delta_star, split, trace.n_tasks() - 1);
    RfeOptions opt;
    opt.target_count = std::min<std::size_t>(10, catalog.size());
    const auto res = recursive_feature_elimination(tr.x, tr.y, va.x, va.y, opt);
    std::vector<std::string> names, blocks;
    for (const auto& e : catalog.entries()) {
      names.push_back(e.name);
      blocks.push_back(to_string(e.block));
    }
    write_out(out_dir, "relevance.csv", relevance_csv(res, names, blocks));
  }
  return kExitOk;
}

int cmd_train_predictor(const std::string& trace_path, const std::string& config_path,
                        std::optional<std::uint64_t> seed, std::size_t max_missing, const std::string& out_dir) {
  const auto j = read_config(config_path);
  config::ObjectReader r(j, "train-predictor config");
  auto data = split_trace(load_trace(trace_path), r, j);
  WindowPredictorConfig pcfg;
  if (r.has("predictor")) pcfg = config::predictor_from_json(j.at("predictor"));
  r.finish();
  if (seed) pcfg.seed = *seed;
  const int n = data.train.n_servers();
  const auto models =
      train_predictor(data.train, constant_history(n, data.train.n_tasks(), ServerSet::all(n)), data.catalog, pcfg);
  save_predictors(models, out_path(out_dir, "predictor.ckpt"));
  std::cout << "wrote " << out_path(out_dir, "predictor.ckpt") << "\n";
  if (data.test.n_tasks() > 0) {
    const auto rows = degradation_study({{pcfg.window, models}}, data.test,
                                        constant_history(n, data.test.n_tasks(), ServerSet::all(n)),
                                        std::min(max_missing, pcfg.history_length - 1));
    write_out(out_dir, "degradation.csv", degradation_csv(rows));
  }
  return kExitOk;
}

int cmd_train_agent(const std::string& trace_path, const std::string& config_path, double lambda,
                    std::optional<std::uint64_t> seed, const std::string& out_dir) {
  const auto j = read_config(config_path);
  config::ObjectReader r(j, "train-agent config");
  auto data = split_trace(load_trace(trace_path), r, j);
  AgentConfig acfg;
  TrainingSchedule schedule;
  double delta_star = 0.175;
  json cost_j;
  if (r.has("agent")) acfg = config::agent_from_json(j.at("agent"));
  if (r.has("schedule")) schedule = config::schedule_from_json(j.at("schedule"));
  if (r.has("cost")) cost_j = j.at("cost");
  r.get("delta_star", delta_star);
  r.finish();
  if (seed) acfg.seed = *seed;
  auto params = config::cost_from_json(cost_j, data.train.n_servers(), lambda, delta_star);
  params.lambda = lambda;
  params.validate();
  const auto trained = train_agent(data.train, data.catalog, params, acfg, schedule);
  save_agent(trained, out_path(out_dir, "agent.ckpt"));
  std::cout << "wrote " << out_path(out_dir, "agent.ckpt") << "\n";
  write_out(out_dir, "training_log.csv", training_log_csv(trained.log));
  return kExitOk;
}

int cmd_simulate(const std::string& trace_path, const std::string& controller, const std::string& checkpoint,
                 double delta, double delta_star, double from_fraction, std::uint64_t seed,
                 const std::string& catalog_name, const std::string& out_dir) {
  const auto full = load_trace(trace_path);
  require(from_fraction >= 0.0 && from_fraction < 1.0, ErrorKind::kConfig, "--from must lie in [0,1)");
  const auto begin = static_cast<std::int64_t>(static_cast<double>(full.n_tasks()) * from_fraction);
  const auto trace = full.slice(begin, full.n_tasks());

  std::unique_ptr<Controller> c;
  FeatureCatalog catalog = config::catalog_from_json(catalog_name);
  std::size_t L = 3;
  std::string label = controller;
  if (controller == "all") {
    c = baseline_all();
  } else if (controller == "best_rssi") {
    c = baseline_best_channel(catalog);
  } else if (controller == "random") {
    c = baseline_random(seed);
  } else if (controller.rfind("fixed:", 0) == 0) {
    c = baseline_fixed(static_cast<int>(csv::parse_int(controller.substr(6), "fixed server id")));
  } else if (controller == "myopic") {
    require(!checkpoint.empty(), ErrorKind::kConfig, "myopic needs --checkpoint");
    auto models = load_predictors(checkpoint);
    catalog = models.front().catalog;
    L = models.front().config.history_length;
    c = std::make_unique<MyopicController>(std::move(models), delta);
  } else if (controller == "drl") {
    require(!checkpoint.empty(), ErrorKind::kConfig, "drl needs --checkpoint");
    auto trained = load_agent(checkpoint);
    catalog = trained.catalog;
    L = trained.agent.config().history_length;
    c = std::make_unique<DrlController>(std::move(trained.agent));
  } else {
    fail(ErrorKind::kConfig, "unknown controller '" + controller + "'");
  }
  const auto result = run_episode(trace, *c, catalog, SimConfig{delta_star, L});
  write_out(out_dir, "sim.csv", sim_result_csv(result));
  write_out(out_dir, "decisions.csv", decision_trace(result));
  auto summary = sim_summary_json(result);
  const auto rtop = rtop_accounting(result, delta);
  summary["rtop"] = {{"delta", rtop.delta},
                     {"violation_rate", rtop.violation_rate},
                     {"constraint_satisfied", rtop.constraint_satisfied},
                     {"expected_set_size", rtop.expected_set_size}};
  write_out(out_dir, "summary.json", summary.dump(2) + "\n");
  std::cout << label << ": fraction_below=" << result.summary.fraction_below
            << " avg_set_size=" << result.summary.avg_set_size << "\n";
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::uint64_t>& seeds, const std::string& out_dir) {
  require(!config_path.empty(), ErrorKind::kConfig, "sweep needs --config");
  auto spec = config::experiment_from_json(read_config(config_path));
  if (!seeds.empty()) spec.seeds = seeds;
  if (!out_dir.empty()) spec.output_dir = out_dir;
  spec.validate();
  const auto rows = tradeoff_sweep(spec);
  write_out(spec.output_dir, "sweep.csv", sweep_csv(rows));
  write_out(spec.output_dir, "report.csv", report_csv(rows));
  write_out(spec.output_dir, "experiment.json", config::to_json(spec).dump(2) + "\n");
  return kExitOk;
}

int cmd_report(const std::string& sweep_path, const std::string& trace_path, const std::string& out_dir) {
  require(!sweep_path.empty() || !trace_path.empty(), ErrorKind::kConfig, "report needs --sweep or --trace");
  if (!sweep_path.empty()) write_out(out_dir, "report.csv", report_csv(parse_sweep_csv(csv::read_file(sweep_path))));
  if (!trace_path.empty()) write_out(out_dir, "cdf.csv", cdf_compare(delay_series(load_trace(trace_path))));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Redundant task offloading: traces, controllers and experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", trace_path, checkpoint, controller = "all", catalog_name = "compact",
                           sweep_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> tasks;
  std::vector<std::uint64_t> seeds;
  double delta_star = 0.175, delta = 0.1, lambda = 0.2, from_fraction = 0.0;
  std::size_t max_missing = 2;
  bool relevance = false;

  auto* gen = app.add_subcommand("gen", "generate a synthetic trace");
  gen->add_option("--config", config_path, "synthetic trace config (JSON)");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--tasks", tasks, "number of tasks");
  gen->add_option("--out-dir", out_dir, "output directory");

  auto* st = app.add_subcommand("stats", "delay statistics and CDF curves of a trace");
  st->add_option("--trace", trace_path, "trace CSV")->required();
  st->add_option("--delta-star", delta_star, "delay threshold in seconds");
  st->add_flag("--relevance", relevance, "also rank features with L1-logistic elimination");
  st->add_option("--out-dir", out_dir, "output directory");

  auto* tp = app.add_subcommand("train-predictor", "train the per-server exceedance predictors");
  tp->add_option("--trace", trace_path, "trace CSV")->required();
  tp->add_option("--config", config_path, "training config (JSON)");
  tp->add_option("--seed", seed, "training seed");
  tp->add_option("--max-missing", max_missing, "largest number of hidden recent samples in the degradation table");
  tp->add_option("--out-dir", out_dir, "output directory");

  auto* ta = app.add_subcommand("train-agent", "train the double deep Q-learning agent");
  ta->add_option("--trace", trace_path, "trace CSV")->required();
  ta->add_option("--config", config_path, "training config (JSON)");
  ta->add_option("--lambda", lambda, "delay weight in the cost")->check(CLI::Range(0.0, 1.0));
  ta->add_option("--seed", seed, "training seed");
  ta->add_option("--out-dir", out_dir, "output directory");

  auto* sim = app.add_subcommand("simulate", "replay a trace against one controller");
  sim->add_option("--trace", trace_path, "trace CSV")->required();
  sim->add_option("--controller", controller, "all | best_rssi | random | fixed:N | myopic | drl");
  sim->add_option("--checkpoint", checkpoint, "predictor or agent checkpoint");
  sim->add_option("--delta", delta, "allowed exceedance probability (myopic, accounting)");
  sim->add_option("--delta-star", delta_star, "delay threshold in seconds");
  sim->add_option("--from", from_fraction, "start replay at this fraction of the trace");
  sim->add_option("--seed", seed, "seed for the random baseline");
  sim->add_option("--catalog", catalog_name, "catalog preset for baselines");
  sim->add_option("--out-dir", out_dir, "output directory");

  auto* sw = app.add_subcommand("sweep", "run an experiment grid");
  std::string sweep_out;
  sw->add_option("--config", config_path, "experiment config (JSON)")->required();
  sw->add_option("--seed", seeds, "override the seed list");
  sw->add_option("--out-dir", sweep_out, "output directory (overrides the spec)");

  auto* rp = app.add_subcommand("report", "summarize a sweep and/or a trace");
  rp->add_option("--sweep", sweep_path, "sweep CSV");
  rp->add_option("--trace", trace_path, "trace CSV for CDF curves");
  rp->add_option("--out-dir", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen(config_path, seed, tasks, out_dir);
    if (*st) return cmd_stats(trace_path, delta_star, relevance, out_dir);
    if (*tp) return cmd_train_predictor(trace_path, config_path, seed, max_missing, out_dir);
    if (*ta) return cmd_train_agent(trace_path, config_path, lambda, seed, out_dir);
    if (*sim)
      return cmd_simulate(trace_path, controller, checkpoint, delta, delta_star, from_fraction, seed.value_or(1),
                          catalog_name, out_dir);
    if (*sw) return cmd_sweep(config_path, seeds, sweep_out);
    if (*rp) return cmd_report(sweep_path, trace_path, out_dir);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return e.kind() == ErrorKind::kConfig ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
