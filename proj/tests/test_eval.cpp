#include <catch_amalgamated.hpp>

#include <random>

#include "redoff/config.hpp"
#include "redoff/experiment.hpp"
#include "redoff/metrics.hpp"
#include "redoff/synthetic.hpp"

using namespace redoff;
using Catch::Matchers::WithinAbs;

namespace {

// 2 * (number of positive/negative pairs ordered correctly, ties counted once).
std::int64_t twice_pair_count(const std::vector<double>& s, const std::vector<int>& y) {
  std::int64_t c = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) c += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
  return c;
}

ExperimentSpec small_spec(std::int64_t tasks) {
  ExperimentSpec s;
  auto syn = default_synthetic_config(1);
  syn.n_tasks = tasks;
  s.synthetic = syn;
  s.seeds = {1, 2};
  return s;
}

WindowPredictorConfig small_predictor() {
  WindowPredictorConfig c;
  c.hidden_sizes = {32, 16};
  c.epochs = 8;
  return c;
}

}  // namespace

TEST_CASE("AUC examples", "[eval]") {
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
  CHECK(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{0, 0, 1, 1}) == 0.0);
  CHECK(auc(std::vector<double>(6, 0.3), std::vector<int>{0, 1, 0, 1, 1, 0}) == 0.5);
  try {
    auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1});
    FAIL("expected degenerate labels");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegenerateLabels);
  }

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u;
  std::bernoulli_distribution b(0.3);
  std::vector<double> s;
  std::vector<int> y;
  for (int k = 0; k < 10000; ++k) {
    s.push_back(u(rng));
    y.push_back(b(rng) ? 1 : 0);
  }
  CHECK_THAT(auc(s, y), WithinAbs(0.5, 0.02));
}

TEST_CASE("AUC equals the pairwise count", "[eval][property]") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng() % 999;
    std::uniform_int_distribution<int> level(0, 1 + static_cast<int>(rng() % 30));
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t k = 0; k < n; ++k) {
      s.push_back(level(rng) * 0.1);
      y.push_back(static_cast<int>(rng() % 2));
    }
    y[0] = 0;
    y[1] = 1;
    const auto pos = std::count(y.begin(), y.end(), 1);
    const auto neg = static_cast<std::int64_t>(n) - pos;
    const double a = auc(s, y);
    CHECK(std::llround(a * 2.0 * static_cast<double>(pos * neg)) == twice_pair_count(s, y));
    CHECK_THAT(a, WithinAbs(static_cast<double>(twice_pair_count(s, y)) / (2.0 * pos * neg), 1e-12));
  }
}

TEST_CASE("minimum-delay CDF dominates every server", "[eval][property]") {
  auto cfg = default_synthetic_config(3);
  cfg.n_tasks = 2000;
  const auto d = generate_synthetic(cfg);
  const auto series = delay_series(d);
  REQUIRE(series.size() == 6);
  CHECK(series[0].name == "min");
  CHECK(series[4].name == "average");
  CHECK(series[5].name == "best_rssi");

  const auto t = csv::parse_table(cdf_compare(series));
  CHECK(t.header == std::vector<std::string>{"curve", "x", "cdf"});
  std::map<std::string, std::vector<double>> sorted;
  for (const auto& s : series) {
    sorted[s.name] = s.samples;
    std::sort(sorted[s.name].begin(), sorted[s.name].end());
  }
  for (const auto& row : t.rows) {
    const double x = csv::parse_double(row[1], "x");
    const double fmin = stats::cdf_at(sorted["min"], x);
    for (const auto& s : series) CHECK(fmin >= stats::cdf_at(sorted[s.name], x));
  }

  const auto step = csv::parse_table(cdf_compare({{"flat", {0.2, 0.2, 0.2}}}));
  REQUIRE(step.rows.size() == 1);
  CHECK(step.rows[0] == std::vector<std::string>{"flat", "0.2", "1"});
  CHECK_THROWS_AS(cdf_compare({{"empty", {}}}), Error);
}

TEST_CASE("degradation study", "[eval]") {
  auto cfg = default_synthetic_config(4);
  cfg.n_tasks = 2500;
  const auto d = generate_synthetic(cfg);
  const auto train = d.slice(0, 2000), test = d.slice(2000, 2500);
  const auto cat = compact_catalog().fitted(train, 0, train.n_tasks());
  auto p = small_predictor();
  p.history_length = 4;
  const auto models = train_predictor(train, constant_history(3, train.n_tasks(), ServerSet::all(3)), cat, p);
  const auto h = constant_history(3, test.n_tasks(), ServerSet::all(3));

  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& m : models) {
    const auto set = labeled_set(test, h, cat, p, m.server_id);
    const auto out = m.net.predict(set.inputs);
    for (Eigen::Index k = 0; k < out.cols(); ++k) scores.push_back(out(1, k));
    labels.insert(labels.end(), set.labels.begin(), set.labels.end());
  }
  const auto rows = degradation_study({{1, models}}, test, h, 3);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].auc == auc(scores, labels));
  CHECK(rows[0].n_samples == scores.size());
  for (const auto& r : rows) CHECK(r.auc <= rows[0].auc + 0.02);

  const auto t = csv::parse_table(degradation_csv(rows));
  CHECK(t.header == std::vector<std::string>{"window", "missing", "auc", "n_samples"});
  CHECK(csv::parse_double(t.rows[2][2], "auc") == rows[2].auc);
}

TEST_CASE("trade-off sweep structure", "[eval]") {
  auto spec = small_spec(2500);
  spec.run_random = true;
  spec.fixed = {2};
  spec.myopic = MyopicSweep{{0.01, 0.05, 0.1, 0.2, 0.4, 0.8}, small_predictor()};
  const auto rows = tradeoff_sweep(spec);
  const std::size_t cells = spec.controller_count();
  REQUIRE(rows.size() == cells * spec.seeds.size() + cells);
  for (const auto& r : rows) {
    CHECK(r.fraction_below >= 0.0);
    CHECK(r.fraction_below <= 1.0);
    if (r.controller == "all") CHECK(r.avg_set_size == 3.0);
    if (r.controller != "all" && r.controller != "myopic") CHECK(r.avg_set_size == 1.0);
  }
  for (const std::string seed : {"1", "2", "mean"}) {
    std::vector<double> sizes;
    for (const auto& r : rows)
      if (r.controller == "myopic" && r.seed == seed) sizes.push_back(r.avg_set_size);
    REQUIRE(sizes.size() == 6);
    for (std::size_t k = 1; k < sizes.size(); ++k) CHECK(sizes[k] <= sizes[k - 1]);
  }

  const auto back = parse_sweep_csv(sweep_csv(rows));
  REQUIRE(back.size() == rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    CHECK(back[k].controller == rows[k].controller);
    CHECK(back[k].param == rows[k].param);
    CHECK(back[k].seed == rows[k].seed);
    CHECK(back[k].fraction_below == rows[k].fraction_below);
    CHECK(back[k].avg_set_size == rows[k].avg_set_size);
  }

  const auto report = csv::parse_table(report_csv(rows));
  REQUIRE(report.rows.size() == cells);
  const auto pp = report.column("gain_pp_vs_best_rssi");
  for (const auto& r : report.rows)
    if (r[0] == "best_rssi") CHECK(csv::parse_double(r[pp], "gain") == 0.0);
}

TEST_CASE("DRL success rate rises with lambda", "[eval][property]") {
  auto spec = small_spec(3000);
  spec.seeds = {1, 2, 3};
  spec.run_all = false;
  spec.run_best_rssi = false;
  DrlSweep drl;
  drl.lambdas = {0.1, 0.2, 0.5};
  drl.agent.hidden_sizes = {64, 32};
  drl.agent.cost_scale = 10.0;
  drl.agent.adam.learning_rate = 3e-4;
  drl.agent.epsilon = {1.0, 0.05, 800};
  drl.schedule = {2400, 400};
  spec.drl = drl;
  std::vector<double> lambda, below;
  for (const auto& r : tradeoff_sweep(spec)) {
    if (r.seed == "mean") continue;
    lambda.push_back(csv::parse_double(r.param, "lambda"));
    below.push_back(r.fraction_below);
  }
  REQUIRE(lambda.size() == 9);
  CHECK(stats::spearman(lambda, below) > 0.0);
}

TEST_CASE("decision traces", "[eval]") {
  auto cfg = default_synthetic_config(5);
  cfg.n_tasks = 60;
  const auto d = generate_synthetic(cfg);
  const auto cat = compact_catalog();
  {
    AllServersController c;
    const auto r = run_episode(d, c, cat, {0.175, 3});
    const auto rows = parse_decision_trace(decision_trace(r));
    REQUIRE(rows.size() == r.per_task.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      CHECK(rows[k].task == r.per_task[k].task_index);
      for (int n = 0; n < 3; ++n) {
        CHECK_FALSE(rows[k].hidden[static_cast<std::size_t>(n)].has_value());
        CHECK(*rows[k].realized[static_cast<std::size_t>(n)] == r.per_task[k].delays[static_cast<std::size_t>(n)]);
      }
    }
  }
  {
    FixedController c(2);
    const auto r = run_episode(d, c, cat, {0.175, 3});
    for (const auto& row : parse_decision_trace(decision_trace(r))) {
      CHECK(row.selected == ServerSet::single(2, 3));
      CHECK(row.realized[1].has_value());
      CHECK(row.delta_min == *row.realized[1]);
      CHECK(row.hidden[0].has_value());
      CHECK(row.hidden[2].has_value());
      CHECK_FALSE(row.hidden[1].has_value());
      CHECK_FALSE(row.realized[0].has_value());
    }
  }
  {
    SimResult empty;
    empty.n_servers = 3;
    CHECK(decision_trace(empty) == "task,selected,delta_min,realized_1,realized_2,realized_3,hidden_1,hidden_2,hidden_3\n");
    CHECK(parse_decision_trace(decision_trace(empty)).empty());
  }
}

TEST_CASE("experiment configuration", "[eval][config]") {
  const auto j = config::parse_json(R"({
    "trace": {"synthetic": {"n_tasks": 500, "n_servers": 3}},
    "delta_star": 0.2,
    "seeds": [4, 5],
    "controllers": {"all": true, "best_rssi": false, "fixed": [1],
                    "myopic": {"deltas": [0.1], "predictor": {"window": 3, "exceed_count": 2}},
                    "drl": {"lambdas": [0.2], "agent": {"cost_scale": 10}, "schedule": {"total_steps": 100}}}
  })", "test");
  const auto s = config::experiment_from_json(j);
  CHECK(s.delta_star == 0.2);
  CHECK(s.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK_FALSE(s.run_best_rssi);
  CHECK(s.controller_count() == 4);
  CHECK(s.myopic->predictor.window == 3);
  CHECK(s.drl->agent.cost_scale == 10.0);
  CHECK(s.drl->schedule.total_steps == 100);

  const auto again = config::experiment_from_json(config::to_json(s));
  CHECK(config::to_json(again) == config::to_json(s));
  CHECK(again.catalog == s.catalog);

  auto bad = j;
  bad["controllers"]["myopic"]["delta"] = {0.1};
  try {
    config::experiment_from_json(bad);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
  auto none = j;
  none["controllers"] = {{"all", false}, {"best_rssi", false}};
  CHECK_THROWS_AS(config::experiment_from_json(none), Error);
  auto both = j;
  both["trace"]["file"] = "x.csv";
  CHECK_THROWS_AS(config::experiment_from_json(both), Error);
  auto zero = j;
  zero["seeds"] = nlohmann::json::array();
  CHECK_THROWS_AS(config::experiment_from_json(zero), Error);
}
