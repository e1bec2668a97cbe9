#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "redoff/controller.hpp"
#include "redoff/csv.hpp"
#include "redoff/error.hpp"
#include "redoff/features.hpp"
#include "redoff/stats.hpp"
#include "redoff/trace.hpp"

namespace redoff {

struct SimConfig {
  double delta_star = 0.175;
  std::size_t history_length = 3;
};

struct TaskRecord {
  std::int64_t task_index = 0;
  ServerSet selected;
  std::vector<double> delays;  // all N servers; unselected ones were never shown to the controller
  double delta_min = 0.0;
  bool below_threshold = false;
};

struct SimSummary {
  std::size_t n_tasks = 0;
  double fraction_below = 0.0;
  double avg_set_size = 0.0;
  std::vector<stats::CdfPoint> cdf;
};

struct SimResult {
  std::string controller;
  int n_servers = 0;
  double delta_star = 0.175;
  std::vector<TaskRecord> per_task;
  SimSummary summary;

  friend bool operator==(const SimResult& a, const SimResult& b) {
    if (a.controller != b.controller || a.n_servers != b.n_servers || a.delta_star != b.delta_star ||
        a.per_task.size() != b.per_task.size())
      return false;
    for (std::size_t k = 0; k < a.per_task.size(); ++k) {
      const auto &x = a.per_task[k], &y = b.per_task[k];
      if (x.task_index != y.task_index || x.selected != y.selected || x.delays != y.delays ||
          x.delta_min != y.delta_min || x.below_threshold != y.below_threshold)
        return false;
    }
    return a.summary.fraction_below == b.summary.fraction_below && a.summary.avg_set_size == b.summary.avg_set_size;
  }
};

inline SimSummary summarize(const std::vector<TaskRecord>& records) {
  SimSummary s;
  s.n_tasks = records.size();
  if (records.empty()) return s;
  std::vector<double> dmin;
  double below = 0.0, size = 0.0;
  for (const auto& r : records) {
    below += r.below_threshold ? 1.0 : 0.0;
    size += r.selected.size();
    dmin.push_back(r.delta_min);
  }
  s.fraction_below = below / static_cast<double>(records.size());
  s.avg_set_size = size / static_cast<double>(records.size());
  s.cdf = stats::ecdf(dmin);
  return s;
}

/// First task that is decided by the controller; earlier tasks form the
/// all-servers warm-up.
inline std::int64_t first_decision_task(const FeatureCatalog& catalog, std::size_t L) {
  return static_cast<std::int64_t>(L - 1) * catalog.max_lag_step() + 1;
}

/// Replays the trace: the controller picks the set for task i from the state
/// at task i-1, built with its own selection history.
inline SimResult run_episode(const TraceDataset& trace, Controller& controller, const FeatureCatalog& catalog,
                             const SimConfig& config) {
  const std::size_t L = config.history_length;
  require(L >= 1, ErrorKind::kConfig, "history length must be positive");
  require(config.delta_star > 0.0, ErrorKind::kConfig, "delta_star must be positive");
  const auto start = first_decision_task(catalog, L);
  require(trace.n_tasks() > start, ErrorKind::kInsufficientHistory, "trace length must exceed the warm-up");
  const int n = trace.n_servers();

  SimResult result;
  result.controller = controller.name();
  result.n_servers = n;
  result.delta_star = config.delta_star;
  controller.reset();

  SelectionHistory history(n);
  for (std::int64_t i = 0; i < start; ++i) history.push_back(ServerSet::all(n));
  for (std::int64_t i = start; i < trace.n_tasks(); ++i) {
    const auto state = build_state(trace, catalog, i - 1, L, history);
    const ServerSet set = controller.select(state);
    require(!set.empty(), ErrorKind::kContractViolation, "controller returned an empty server set");
    require((set.mask() >> n) == 0, ErrorKind::kContractViolation, "controller selected a server above N");

    TaskRecord rec;
    rec.task_index = i;
    rec.selected = set;
    rec.delta_min = std::numeric_limits<double>::infinity();
    TaskOutcome outcome{i, set, 0.0, {}};
    for (int s = 1; s <= n; ++s) {
      const double d = trace.delay(i, s);
      rec.delays.push_back(d);
      if (set.contains(s)) {
        rec.delta_min = std::min(rec.delta_min, d);
        outcome.replica_delays.emplace_back(s, d);
      }
    }
    rec.below_threshold = !(rec.delta_min > config.delta_star);
    outcome.delta_min = rec.delta_min;
    history.push_back(set);
    controller.observe(outcome);
    result.per_task.push_back(std::move(rec));
  }
  result.summary = summarize(result.per_task);
  return result;
}

// -- baselines --------------------------------------------------------------

class AllServersController : public Controller {
 public:
  ServerSet select(const FeatureState& s) override { return ServerSet::all(static_cast<int>(s.per_server.size())); }
  std::string name() const override { return "all"; }
};

class FixedController : public Controller {
 public:
  explicit FixedController(int server_id) : server_(server_id) {}
  ServerSet select(const FeatureState& s) override {
    return ServerSet::single(server_, static_cast<int>(s.per_server.size()));
  }
  std::string name() const override { return "fixed" + std::to_string(server_); }

 private:
  int server_;
};

class RandomController : public Controller {
 public:
  explicit RandomController(std::uint64_t seed) : seed_(seed), rng_(seed) {}
  ServerSet select(const FeatureState& s) override {
    const int n = static_cast<int>(s.per_server.size());
    std::uniform_int_distribution<int> pick(1, n);
    return ServerSet::single(pick(rng_), n);
  }
  void reset() override { rng_.seed(seed_); }
  std::string name() const override { return "random"; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 rng_;
};

/// Singleton with the highest RSSI in the newest lag slot (last observed
/// value for servers that were not selected).
class BestChannelController : public Controller {
 public:
  explicit BestChannelController(const FeatureCatalog& catalog) {
    const auto idx = catalog.index_of("rssi");
    require(idx.has_value(), ErrorKind::kConfig, "best-channel baseline needs rssi in the feature catalog");
    rssi_index_ = *idx;
  }
  ServerSet select(const FeatureState& s) override {
    int best = 1;
    double best_rssi = -std::numeric_limits<double>::infinity();
    for (const auto& m : s.per_server) {
      const double v = m.value(rssi_index_, m.history - 1);
      if (v > best_rssi) {
        best_rssi = v;
        best = m.server_id;
      }
    }
    return ServerSet::single(best, static_cast<int>(s.per_server.size()));
  }
  std::string name() const override { return "best_rssi"; }

 private:
  std::size_t rssi_index_ = 0;
};

inline std::unique_ptr<Controller> baseline_all() { return std::make_unique<AllServersController>(); }
inline std::unique_ptr<Controller> baseline_fixed(int n) { return std::make_unique<FixedController>(n); }
inline std::unique_ptr<Controller> baseline_random(std::uint64_t seed) { return std::make_unique<RandomController>(seed); }
inline std::unique_ptr<Controller> baseline_best_channel(const FeatureCatalog& c) {
  return std::make_unique<BestChannelController>(c);
}

// -- RTOP accounting ----------------------------------------------------------

struct RtopReport {
  std::size_t n_tasks = 0;
  std::size_t violations = 0;
  double violation_rate = 0.0;  // empirical P(delta_min > delta*)
  double delta = 0.0;
  bool constraint_satisfied = false;
  double expected_set_size = 0.0;
};

inline RtopReport rtop_accounting(const SimResult& r, double delta) {
  require(!r.per_task.empty(), ErrorKind::kEmptyInput, "simulation result has no tasks");
  RtopReport rep;
  rep.n_tasks = r.per_task.size();
  rep.delta = delta;
  double size = 0.0;
  for (const auto& t : r.per_task) {
    rep.violations += t.delta_min > r.delta_star ? 1 : 0;
    size += t.selected.size();
  }
  rep.violation_rate = static_cast<double>(rep.violations) / static_cast<double>(rep.n_tasks);
  rep.constraint_satisfied = rep.violation_rate < delta;
  rep.expected_set_size = size / static_cast<double>(rep.n_tasks);
  return rep;
}

// -- serialization -------------------------------------------------------------

/// task,selected,delta_min,below_threshold,delay_1..delay_N
inline std::string sim_result_csv(const SimResult& r) {
  csv::Table t;
  t.header = {"task", "selected", "delta_min", "below_threshold"};
  for (int n = 1; n <= r.n_servers; ++n) t.header.push_back("delay_" + std::to_string(n));
  for (const auto& rec : r.per_task) {
    std::vector<std::string> row{std::to_string(rec.task_index), rec.selected.to_string(), csv::format(rec.delta_min),
                                 rec.below_threshold ? "1" : "0"};
    for (double d : rec.delays) row.push_back(csv::format(d));
    t.rows.push_back(std::move(row));
  }
  return t.to_string();
}

inline nlohmann::json sim_summary_json(const SimResult& r) {
  nlohmann::json j;
  j["controller"] = r.controller;
  j["n_servers"] = r.n_servers;
  j["delta_star"] = r.delta_star;
  j["n_tasks"] = r.summary.n_tasks;
  j["fraction_below"] = r.summary.fraction_below;
  j["avg_set_size"] = r.summary.avg_set_size;
  if (!r.per_task.empty()) {
    std::vector<double> dmin;
    for (const auto& t : r.per_task) dmin.push_back(t.delta_min);
    nlohmann::json q;
    for (double p : kSummaryQuantiles) q[csv::format(p)] = stats::quantile(dmin, p);
    j["delta_min_quantiles"] = q;
  }
  return j;
}

/// Reads back what sim_result_csv wrote; the summary is recomputed.
inline SimResult parse_sim_result_csv(const std::string& text, const std::string& controller, double delta_star) {
  const auto t = csv::parse_table(text);
  require(t.header.size() >= 5 && t.header[0] == "task" && t.header[1] == "selected", ErrorKind::kSchema,
          "not a simulation result table");
  SimResult r;
  r.controller = controller;
  r.delta_star = delta_star;
  r.n_servers = static_cast<int>(t.header.size()) - 4;
  for (const auto& row : t.rows) {
    require(row.size() == t.header.size(), ErrorKind::kSchema, "simulation row width mismatch");
    TaskRecord rec;
    rec.task_index = csv::parse_int(row[0], "task");
    rec.selected = ServerSet::parse(row[1], r.n_servers);
    rec.delta_min = csv::parse_double(row[2], "delta_min");
    rec.below_threshold = row[3] == "1";
    for (std::size_t k = 4; k < row.size(); ++k) rec.delays.push_back(csv::parse_double(row[k], "delay"));
    r.per_task.push_back(std::move(rec));
  }
  r.summary = summarize(r.per_task);
  return r;
}

}  // namespace redoff
