#include <catch_amalgamated.hpp>

#include <map>

#include "redoff/sim.hpp"
#include "redoff/synthetic.hpp"

using namespace redoff;
using Catch::Matchers::WithinAbs;

namespace {

TraceDataset hand_trace(const std::vector<std::vector<double>>& delays,
                        const std::vector<std::vector<double>>& rssi = {}) {
  const int n = static_cast<int>(delays.front().size());
  std::vector<GeoPoint> servers;
  for (int s = 0; s < n; ++s) servers.push_back({45.0, 9.0 + 0.0001 * s, 0.0});
  std::vector<PipelineSample> samples;
  std::vector<TelemetrySample> telemetry;
  for (std::size_t t = 0; t < delays.size(); ++t) {
    for (int s = 0; s < n; ++s) {
      PipelineSample p;
      p.task_index = static_cast<std::int64_t>(t);
      p.server_id = s + 1;
      p.comm_delay = delays[t][static_cast<std::size_t>(s)];
      p.rssi = rssi.empty() ? -50.0 : rssi[t][static_cast<std::size_t>(s)];
      samples.push_back(p);
    }
    TelemetrySample tel;
    tel.task_index = static_cast<std::int64_t>(t);
    tel.position = {45.0001, 9.0, 10.0};
    telemetry.push_back(tel);
  }
  return TraceDataset(n, 1.0 / 15.0, servers, samples, telemetry);
}

TraceDataset synthetic(std::int64_t tasks, std::uint64_t seed) {
  auto c = default_synthetic_config(seed);
  c.n_tasks = tasks;
  return generate_synthetic(c);
}

// Peeks at the trace: picks the server with the smallest upcoming delay.
class OracleController : public Controller {
 public:
  explicit OracleController(const TraceDataset& d) : d_(d) {}
  ServerSet select(const FeatureState& s) override {
    const auto next = s.task_index + 1;
    int best = 1;
    for (int n = 2; n <= d_.n_servers(); ++n)
      if (d_.delay(next, n) < d_.delay(next, best)) best = n;
    return ServerSet::single(best, d_.n_servers());
  }
  std::string name() const override { return "oracle"; }

 private:
  const TraceDataset& d_;
};

// Wraps another controller and records every state and outcome it sees.
class SpyController : public Controller {
 public:
  explicit SpyController(std::unique_ptr<Controller> inner) : inner_(std::move(inner)) {}
  ServerSet select(const FeatureState& s) override {
    states.push_back(s);
    return inner_->select(s);
  }
  void observe(const TaskOutcome& o) override { outcomes.push_back(o); }
  std::string name() const override { return "spy"; }

  std::vector<FeatureState> states;
  std::vector<TaskOutcome> outcomes;

 private:
  std::unique_ptr<Controller> inner_;
};

class ConstantController : public Controller {
 public:
  explicit ConstantController(ServerSet s) : s_(s) {}
  ServerSet select(const FeatureState&) override { return s_; }
  std::string name() const override { return "constant"; }

 private:
  ServerSet s_;
};

}  // namespace

TEST_CASE("all-servers and fixed baselines replay the trace", "[sim]") {
  const auto d = synthetic(500, 3);
  const auto c = compact_catalog().fitted(d, 0, d.n_tasks());
  const SimConfig cfg{0.175, 3};
  auto all = baseline_all();
  const auto r = run_episode(d, *all, c, cfg);
  const auto start = first_decision_task(c, 3);
  REQUIRE(start == 3);
  REQUIRE(r.per_task.size() == static_cast<std::size_t>(d.n_tasks() - start));
  for (const auto& t : r.per_task) {
    CHECK(t.selected == ServerSet::all(3));
    CHECK(t.delta_min == std::min({d.delay(t.task_index, 1), d.delay(t.task_index, 2), d.delay(t.task_index, 3)}));
    CHECK(t.below_threshold == (t.delta_min <= 0.175));
  }
  CHECK(r.summary.avg_set_size == 3.0);

  for (int n = 1; n <= 3; ++n) {
    auto fixed = baseline_fixed(n);
    const auto f = run_episode(d, *fixed, c, cfg);
    for (std::size_t k = 0; k < f.per_task.size(); ++k) {
      CHECK(f.per_task[k].delta_min == d.delay(f.per_task[k].task_index, n));
      CHECK(r.per_task[k].delta_min <= f.per_task[k].delta_min);
    }
    CHECK(r.summary.fraction_below >= f.summary.fraction_below);
  }
}

TEST_CASE("minimum delay is monotone in the replica set", "[sim][property]") {
  const auto d = synthetic(200, 4);
  const auto c = compact_catalog().fitted(d, 0, d.n_tasks());
  std::map<std::uint32_t, SimResult> runs;
  for (std::uint32_t m = 1; m <= 7; ++m) {
    ConstantController ctl(ServerSet::from_mask(m, 3));
    runs[m] = run_episode(d, ctl, c, {0.175, 2});
  }
  for (std::uint32_t a = 1; a <= 7; ++a)
    for (std::uint32_t b = 1; b <= 7; ++b)
      if ((a & b) == a)
        for (std::size_t k = 0; k < runs[a].per_task.size(); ++k)
          CHECK(runs[b].per_task[k].delta_min <= runs[a].per_task[k].delta_min);
}

TEST_CASE("a prescient singleton dominates causal singletons", "[sim]") {
  const auto d = synthetic(1500, 5);
  const auto c = compact_catalog().fitted(d, 0, d.n_tasks());
  const SimConfig cfg{0.175, 3};
  OracleController oracle(d);
  const auto o = run_episode(d, oracle, c, cfg);
  auto all = baseline_all();
  const auto a = run_episode(d, *all, c, cfg);
  for (std::size_t k = 0; k < o.per_task.size(); ++k) CHECK(o.per_task[k].delta_min == a.per_task[k].delta_min);
  CHECK(o.summary.avg_set_size == 1.0);
  std::vector<std::unique_ptr<Controller>> causal;
  causal.push_back(baseline_random(1));
  causal.push_back(baseline_best_channel(c));
  causal.push_back(baseline_fixed(1));
  causal.push_back(baseline_fixed(2));
  for (auto& ctl : causal) {
    const auto r = run_episode(d, *ctl, c, cfg);
    CHECK(o.summary.fraction_below >= r.summary.fraction_below);
  }
}

TEST_CASE("best-channel baseline picks the strongest RSSI", "[sim]") {
  const auto rssi = make_catalog({"rssi"});
  const std::vector<std::vector<double>> delays(3, std::vector<double>{0.1, 0.1, 0.1});
  {
    const auto d = hand_trace(delays, {{-40, -60, -55}, {-70, -30, -80}, {0, 0, 0}});
    auto ctl = baseline_best_channel(rssi);
    const auto r = run_episode(d, *ctl, rssi, {0.175, 1});
    REQUIRE(r.per_task.size() == 2);
    CHECK(r.per_task[0].selected == ServerSet::single(1, 3));
  }
  {
    const auto d = hand_trace(delays, {{-50, -50, -60}, {-50, -50, -60}, {0, 0, 0}});
    auto ctl = baseline_best_channel(rssi);
    CHECK(run_episode(d, *ctl, rssi, {0.175, 1}).per_task[0].selected == ServerSet::single(1, 3));
  }
  CHECK_THROWS_AS(BestChannelController(make_catalog({"delay"})), Error);
}

TEST_CASE("random baseline is uniform over singletons", "[sim]") {
  const auto d = synthetic(6001, 6);
  const auto c = make_catalog({"delay"});
  auto ctl = baseline_random(17);
  const auto r = run_episode(d, *ctl, c, {0.175, 1});
  std::map<std::uint32_t, int> counts;
  for (const auto& t : r.per_task) ++counts[t.selected.mask()];
  REQUIRE(counts.size() == 3);
  const double n = static_cast<double>(r.per_task.size());
  const double sd = std::sqrt(n * (1.0 / 3.0) * (2.0 / 3.0));
  for (const auto& [m, k] : counts) CHECK(std::abs(k - n / 3.0) < 3 * sd);
  CHECK(run_episode(d, *ctl, c, {0.175, 1}) == r);
}

TEST_CASE("constraint accounting", "[sim]") {
  SimResult r;
  r.n_servers = 2;
  r.delta_star = 0.175;
  for (int k = 0; k < 10; ++k) {
    TaskRecord t;
    t.task_index = k;
    t.selected = ServerSet::from_mask(k < 5 ? 1u : 3u, 2);
    t.delta_min = k == 3 || k == 7 ? 0.2 : 0.1;
    t.below_threshold = t.delta_min <= 0.175;
    r.per_task.push_back(t);
  }
  const auto rep = rtop_accounting(r, 0.1);
  CHECK(rep.violations == 2);
  CHECK(rep.violation_rate == 0.2);
  CHECK_FALSE(rep.constraint_satisfied);
  CHECK(rep.expected_set_size == 1.5);
  CHECK(rtop_accounting(r, 0.25).constraint_satisfied);
  CHECK_FALSE(rtop_accounting(r, 0.2).constraint_satisfied);

  for (auto& t : r.per_task) t.delta_min = 0.175;
  const auto none = rtop_accounting(r, 0.01);
  CHECK(none.violations == 0);
  CHECK(none.constraint_satisfied);

  CHECK_THROWS_AS(rtop_accounting(SimResult{}, 0.1), Error);
}

TEST_CASE("accounting matches a recount on simulated runs", "[sim][property]") {
  const auto d = synthetic(800, 7);
  const auto c = compact_catalog().fitted(d, 0, d.n_tasks());
  auto ctl = baseline_random(3);
  const auto r = run_episode(d, *ctl, c, {0.175, 3});
  std::size_t bad = 0;
  for (const auto& t : r.per_task) {
    double m = std::numeric_limits<double>::infinity();
    for (int n : t.selected.ids()) m = std::min(m, d.delay(t.task_index, n));
    bad += m > 0.175 ? 1 : 0;
  }
  const auto rep = rtop_accounting(r, 0.1);
  CHECK(rep.violations == bad);
  CHECK_THAT(1.0 - rep.violation_rate, WithinAbs(r.summary.fraction_below, 1e-12));
}

TEST_CASE("controllers never see unselected servers", "[sim]") {
  const auto d = synthetic(300, 8);
  const auto c = compact_catalog().fitted(d, 0, d.n_tasks());
  const std::size_t L = 3;
  const auto start = first_decision_task(c, L);

  // Same trace except that servers 2 and 3 get different delays and network
  // state after the warm-up.
  auto samples = d.samples();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 0.5);
  for (auto& s : samples)
    if (s.server_id != 1 && s.task_index >= start) {
      s.comm_delay = u(rng);
      s.rssi = -90.0 * u(rng);
      s.tcp.rtt_avg = u(rng);
      s.tcp.retransmissions = 7;
    }
  const TraceDataset altered(d.n_servers(), d.inter_arrival(), d.server_positions(), samples, d.telemetry());

  SpyController a(baseline_fixed(1)), b(baseline_fixed(1));
  run_episode(d, a, c, {0.175, L});
  run_episode(altered, b, c, {0.175, L});
  REQUIRE(a.states.size() == b.states.size());
  for (std::size_t k = 0; k < a.states.size(); ++k) REQUIRE(a.states[k] == b.states[k]);
  for (const auto& o : a.outcomes) {
    REQUIRE(o.replica_delays.size() == 1);
    CHECK(o.replica_delays[0].first == 1);
    CHECK(o.replica_delays[0].second == d.delay(o.task_index, 1));
  }
}

TEST_CASE("replays are deterministic", "[sim]") {
  const auto d = synthetic(400, 9);
  const auto c = compact_catalog().fitted(d, 0, d.n_tasks());
  auto r1 = baseline_random(5);
  auto r2 = baseline_random(5);
  CHECK(run_episode(d, *r1, c, {0.175, 3}) == run_episode(d, *r2, c, {0.175, 3}));
}

TEST_CASE("invalid selections are contract violations", "[sim]") {
  const auto d = synthetic(50, 10);
  const auto c = compact_catalog();
  for (const auto& bad : {ServerSet{}, ServerSet::from_mask(8u, 4)}) {
    ConstantController ctl(bad);
    try {
      run_episode(d, ctl, c, {0.175, 2});
      FAIL("expected a contract violation");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kContractViolation);
    }
  }
  auto all = baseline_all();
  CHECK_THROWS_AS(run_episode(hand_trace({{0.1, 0.1}, {0.1, 0.1}}), *all, c, {0.175, 3}), Error);
}

TEST_CASE("simulation CSV round-trips", "[sim][io]") {
  const auto d = synthetic(200, 11);
  const auto c = compact_catalog().fitted(d, 0, d.n_tasks());
  auto ctl = baseline_random(2);
  const auto r = run_episode(d, *ctl, c, {0.175, 3});
  const auto back = parse_sim_result_csv(sim_result_csv(r), r.controller, r.delta_star);
  CHECK(back == r);
  const auto j = sim_summary_json(r);
  CHECK(j.at("fraction_below").get<double>() == r.summary.fraction_below);
  CHECK(j.at("avg_set_size").get<double>() == 1.0);
  CHECK_THROWS_AS(parse_sim_result_csv("a,b\n1,2\n", "x", 0.175), Error);
}
