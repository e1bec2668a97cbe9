#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "redoff/config.hpp"
#include "redoff/csv.hpp"
#include "redoff/drl.hpp"
#include "redoff/myopic.hpp"
#include "redoff/sim.hpp"
#include "redoff/synthetic.hpp"
#include "redoff/trace_io.hpp"

namespace redoff {

struct MyopicSweep {
  std::vector<double> deltas{0.01, 0.05, 0.1, 0.2, 0.4};
  WindowPredictorConfig predictor;
};

struct DrlSweep {
  std::vector<double> lambdas{0.05, 0.1, 0.2, 0.5};
  AgentConfig agent;
  nlohmann::json cost;  // overrides on top of CostParams::defaults
  TrainingSchedule schedule;
};

/// Everything a sweep needs. Either `trace_file` or `synthetic` is the
/// trace source; for synthetic traces each seed also reseeds the generator.
struct ExperimentSpec {
  std::optional<std::string> trace_file;
  std::optional<SyntheticConfig> synthetic;
  double delta_star = 0.175;
  double train_fraction = 0.8;
  FeatureCatalog catalog = compact_catalog();
  bool fit_catalog = true;
  std::vector<std::uint64_t> seeds{1};
  bool run_all = true;
  bool run_best_rssi = true;
  bool run_random = false;
  std::vector<int> fixed;
  std::optional<MyopicSweep> myopic;
  std::optional<DrlSweep> drl;
  std::string output_dir = "out";

  std::size_t controller_count() const {
    return (run_all ? 1 : 0) + (run_best_rssi ? 1 : 0) + (run_random ? 1 : 0) + fixed.size() +
           (myopic ? myopic->deltas.size() : 0) + (drl ? drl->lambdas.size() : 0);
  }

  void validate() const {
    require(trace_file.has_value() != synthetic.has_value(), ErrorKind::kConfig,
            "exactly one of trace.file and trace.synthetic must be given");
    require(!seeds.empty(), ErrorKind::kConfig, "at least one seed is required");
    require(controller_count() >= 1, ErrorKind::kConfig, "at least one controller is required");
    require(delta_star > 0.0, ErrorKind::kConfig, "delta_star must be positive");
    require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::kConfig, "train_fraction must lie in (0,1)");
    if (myopic)
      for (double d : myopic->deltas) require(d > 0.0 && d < 1.0, ErrorKind::kConfig, "Delta must lie in (0,1)");
    if (drl)
      for (double l : drl->lambdas) require(l >= 0.0 && l <= 1.0, ErrorKind::kConfig, "lambda must lie in [0,1]");
  }
};

namespace config {

inline ExperimentSpec experiment_from_json(const json& j) {
  ObjectReader r(j, "experiment");
  ExperimentSpec s;
  require(r.has("trace"), ErrorKind::kConfig, "experiment needs a trace section");
  {
    ObjectReader t(j.at("trace"), "trace");
    if (t.has("file")) s.trace_file = j.at("trace").at("file").get<std::string>();
    if (t.has("synthetic")) s.synthetic = synthetic_from_json(j.at("trace").at("synthetic"));
    t.finish();
  }
  r.get("delta_star", s.delta_star);
  r.get("train_fraction", s.train_fraction);
  if (r.has("catalog")) s.catalog = catalog_from_json(j.at("catalog"));
  r.get("fit_catalog", s.fit_catalog);
  r.get("seeds", s.seeds);
  r.get("output_dir", s.output_dir);
  if (r.has("controllers")) {
    const auto& cj = j.at("controllers");
    ObjectReader c(cj, "controllers");
    c.get("all", s.run_all);
    c.get("best_rssi", s.run_best_rssi);
    c.get("random", s.run_random);
    c.get("fixed", s.fixed);
    if (c.has("myopic")) {
      ObjectReader m(cj.at("myopic"), "controllers.myopic");
      MyopicSweep ms;
      m.get("deltas", ms.deltas);
      if (m.has("predictor")) ms.predictor = predictor_from_json(cj.at("myopic").at("predictor"));
      m.finish();
      s.myopic = ms;
    }
    if (c.has("drl")) {
      ObjectReader d(cj.at("drl"), "controllers.drl");
      DrlSweep ds;
      d.get("lambdas", ds.lambdas);
      if (d.has("agent")) ds.agent = agent_from_json(cj.at("drl").at("agent"));
      if (d.has("cost")) ds.cost = cj.at("drl").at("cost");
      if (d.has("schedule")) ds.schedule = schedule_from_json(cj.at("drl").at("schedule"));
      d.finish();
      s.drl = ds;
    }
    c.finish();
  }
  r.finish();
  s.validate();
  return s;
}

inline json to_json(const ExperimentSpec& s) {
  json j;
  if (s.trace_file) j["trace"]["file"] = *s.trace_file;
  if (s.synthetic) j["trace"]["synthetic"] = to_json(*s.synthetic);
  j["delta_star"] = s.delta_star;
  j["train_fraction"] = s.train_fraction;
  j["catalog"] = to_json(s.catalog);
  j["fit_catalog"] = s.fit_catalog;
  j["seeds"] = s.seeds;
  j["output_dir"] = s.output_dir;
  json c;
  c["all"] = s.run_all;
  c["best_rssi"] = s.run_best_rssi;
  c["random"] = s.run_random;
  c["fixed"] = s.fixed;
  if (s.myopic) c["myopic"] = {{"deltas", s.myopic->deltas}, {"predictor", to_json(s.myopic->predictor)}};
  if (s.drl) {
    c["drl"] = {{"lambdas", s.drl->lambdas}, {"agent", to_json(s.drl->agent)}, {"schedule", to_json(s.drl->schedule)}};
    if (!s.drl->cost.is_null()) c["drl"]["cost"] = s.drl->cost;
  }
  j["controllers"] = c;
  return j;
}

}  // namespace config

/// Train and test halves of one seed's trace plus the catalog fitted on
/// the training half.
struct SeedData {
  TraceDataset train;
  TraceDataset test;
  FeatureCatalog catalog;
};

inline SeedData prepare_seed(const ExperimentSpec& spec, std::uint64_t seed) {
  TraceDataset full;
  if (spec.synthetic) {
    auto cfg = *spec.synthetic;
    cfg.seed = seed;
    full = generate_synthetic(cfg);
  } else {
    full = load_trace(*spec.trace_file);
  }
  const auto split = static_cast<std::int64_t>(static_cast<double>(full.n_tasks()) * spec.train_fraction);
  require(split > 0 && split < full.n_tasks(), ErrorKind::kInsufficientHistory, "trace too short to split");
  SeedData out{full.slice(0, split), full.slice(split, full.n_tasks()), spec.catalog};
  if (spec.fit_catalog) out.catalog = spec.catalog.fitted(out.train, 0, out.train.n_tasks());
  return out;
}

struct SweepRow {
  std::string controller;
  std::string param;  // empty for parameterless baselines
  std::string seed;   // "mean" on seed-averaged rows
  double avg_set_size = 0.0;
  double fraction_below = 0.0;
};

/// Runs every (controller, parameter) cell once per seed, evaluating on the
/// test half. Learned controllers are trained on the training half.
inline std::vector<SweepRow> tradeoff_sweep(const ExperimentSpec& spec,
                                            std::map<std::string, SimResult>* keep_results = nullptr) {
  spec.validate();
  std::vector<SweepRow> rows;
  for (const auto seed : spec.seeds) {
    const auto data = prepare_seed(spec, seed);
    const int n = data.test.n_servers();
    auto record = [&](Controller& c, const std::string& name, const std::string& param, std::size_t L) {
      const auto r = run_episode(data.test, c, data.catalog, SimConfig{spec.delta_star, L});
      rows.push_back({name, param, std::to_string(seed), r.summary.avg_set_size, r.summary.fraction_below});
      if (keep_results) (*keep_results)[name + ":" + param + ":" + std::to_string(seed)] = r;
    };
    if (spec.run_all) {
      AllServersController c;
      record(c, "all", "", 3);
    }
    if (spec.run_best_rssi) {
      BestChannelController c(data.catalog);
      record(c, "best_rssi", "", 3);
    }
    if (spec.run_random) {
      RandomController c(seed);
      record(c, "random", "", 3);
    }
    for (int f : spec.fixed) {
      require(f >= 1 && f <= n, ErrorKind::kConfig, "fixed server id outside [1, N]");
      FixedController c(f);
      record(c, "fixed", std::to_string(f), 3);
    }
    if (spec.myopic) {
      auto pcfg = spec.myopic->predictor;
      pcfg.seed = seed;
      pcfg.delta_star = spec.delta_star;
      const auto models = train_predictor(data.train, constant_history(n, data.train.n_tasks(), ServerSet::all(n)),
                                           data.catalog, pcfg);
      for (double d : spec.myopic->deltas) {
        MyopicController c(models, d);
        record(c, "myopic", csv::format(d), pcfg.history_length);
      }
    }
    if (spec.drl) {
      for (double lambda : spec.drl->lambdas) {
        auto acfg = spec.drl->agent;
        acfg.seed = seed;
        auto params = config::cost_from_json(spec.drl->cost, n, lambda, spec.delta_star);
        params.lambda = lambda;
        auto trained = train_agent(data.train, data.catalog, params, acfg, spec.drl->schedule);
        DrlController c(std::move(trained.agent));
        record(c, "drl", csv::format(lambda), acfg.history_length);
      }
    }
  }

  // Seed-averaged rows in first-seen cell order.
  std::vector<SweepRow> means;
  for (const auto& r : rows) {
    auto it = std::find_if(means.begin(), means.end(),
                           [&](const SweepRow& m) { return m.controller == r.controller && m.param == r.param; });
    if (it == means.end()) {
      means.push_back({r.controller, r.param, "mean", 0.0, 0.0});
      it = std::prev(means.end());
    }
    it->avg_set_size += r.avg_set_size / static_cast<double>(spec.seeds.size());
    it->fraction_below += r.fraction_below / static_cast<double>(spec.seeds.size());
  }
  rows.insert(rows.end(), means.begin(), means.end());
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  csv::Table t;
  t.header = {"controller", "param", "seed", "avg_set_size", "fraction_below"};
  for (const auto& r : rows)
    t.rows.push_back({r.controller, r.param, r.seed, csv::format(r.avg_set_size), csv::format(r.fraction_below)});
  return t.to_string();
}

inline std::vector<SweepRow> parse_sweep_csv(const std::string& text) {
  const auto t = csv::parse_table(text);
  const auto c = t.column("controller"), p = t.column("param"), s = t.column("seed");
  const auto a = t.column("avg_set_size"), f = t.column("fraction_below");
  std::vector<SweepRow> rows;
  for (const auto& row : t.rows)
    rows.push_back({row[c], row[p], row[s], csv::parse_double(row[a], "avg_set_size"),
                    csv::parse_double(row[f], "fraction_below")});
  return rows;
}

/// Seed-averaged rows with the gain over the best-RSSI baseline, in
/// percentage points and relative terms. Gains are blank without a
/// best-RSSI row.
inline std::string report_csv(const std::vector<SweepRow>& rows) {
  std::optional<double> reference;
  for (const auto& r : rows)
    if (r.seed == "mean" && r.controller == "best_rssi") reference = r.fraction_below;
  csv::Table t;
  t.header = {"controller", "param", "avg_set_size", "fraction_below", "gain_pp_vs_best_rssi", "gain_rel_vs_best_rssi"};
  for (const auto& r : rows) {
    if (r.seed != "mean") continue;
    std::string pp, rel;
    if (reference) {
      pp = csv::format(100.0 * (r.fraction_below - *reference));
      if (*reference > 0.0) rel = csv::format(r.fraction_below / *reference - 1.0);
    }
    t.rows.push_back({r.controller, r.param, csv::format(r.avg_set_size), csv::format(r.fraction_below), pp, rel});
  }
  return t.to_string();
}

/// Per-task series for plotting: delays of the selected servers and, in
/// separate columns, the delays that the selection did not see.
inline std::string decision_trace(const SimResult& r) {
  csv::Table t;
  t.header = {"task", "selected", "delta_min"};
  for (int n = 1; n <= r.n_servers; ++n) t.header.push_back("realized_" + std::to_string(n));
  for (int n = 1; n <= r.n_servers; ++n) t.header.push_back("hidden_" + std::to_string(n));
  for (const auto& rec : r.per_task) {
    require(rec.delays.size() == static_cast<std::size_t>(r.n_servers), ErrorKind::kValue,
            "decision trace needs every server's delay");
    std::vector<std::string> row{std::to_string(rec.task_index), rec.selected.to_string(), csv::format(rec.delta_min)};
    for (int n = 1; n <= r.n_servers; ++n)
      row.push_back(rec.selected.contains(n) ? csv::format(rec.delays[static_cast<std::size_t>(n - 1)]) : "");
    for (int n = 1; n <= r.n_servers; ++n)
      row.push_back(rec.selected.contains(n) ? "" : csv::format(rec.delays[static_cast<std::size_t>(n - 1)]));
    t.rows.push_back(std::move(row));
  }
  return t.to_string();
}

struct DecisionRow {
  std::int64_t task = 0;
  ServerSet selected;
  double delta_min = 0.0;
  std::vector<std::optional<double>> realized;
  std::vector<std::optional<double>> hidden;
};

inline std::vector<DecisionRow> parse_decision_trace(const std::string& text) {
  const auto t = csv::parse_table(text);
  require(t.header.size() >= 5 && (t.header.size() - 3) % 2 == 0 && t.header[0] == "task", ErrorKind::kSchema,
          "not a decision trace");
  const auto n = static_cast<int>((t.header.size() - 3) / 2);
  auto cell = [](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    return csv::parse_double(s, "delay");
  };
  std::vector<DecisionRow> out;
  for (const auto& row : t.rows) {
    DecisionRow d;
    d.task = csv::parse_int(row[0], "task");
    d.selected = ServerSet::parse(row[1], n);
    d.delta_min = csv::parse_double(row[2], "delta_min");
    for (int k = 0; k < n; ++k) d.realized.push_back(cell(row[static_cast<std::size_t>(3 + k)]));
    for (int k = 0; k < n; ++k) d.hidden.push_back(cell(row[static_cast<std::size_t>(3 + n + k)]));
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace redoff
