#include <catch_amalgamated.hpp>

#include <map>
#include <sstream>

#include "redoff/checkpoint.hpp"
#include "redoff/drl.hpp"
#include "redoff/sim.hpp"
#include "redoff/stats.hpp"
#include "redoff/synthetic.hpp"

using namespace redoff;
using Catch::Matchers::WithinAbs;

namespace {

AgentConfig linear_config() {
  AgentConfig c;
  c.hidden_sizes = {};
  c.batch_size = 1;
  c.buffer_capacity = 4;
  return c;
}

// Output layer of a net without hidden layers: Q = W s + b.
void set_linear(nn::DenseNet<double>& net, std::vector<double> w, std::vector<double> b) {
  auto& l = net.mutable_params().layers.at(0);
  for (std::size_t a = 0; a < b.size(); ++a) {
    l.bias(static_cast<Eigen::Index>(a)) = b[a];
    for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(static_cast<Eigen::Index>(a), j) = w[a];
  }
}

SyntheticConfig coin_flip_trace(std::int64_t tasks, std::uint64_t seed) {
  auto c = default_synthetic_config(seed);
  c.n_tasks = tasks;
  c.per_server.clear();
  c.regime_model.regimes = {{0.10, 0.01}, {0.35, 0.01}};
  c.regime_model.transition = {{0.3, 0.7}, {0.3, 0.7}};
  return c;
}

AgentConfig small_agent(std::uint64_t seed, std::int64_t decay) {
  AgentConfig c;
  c.hidden_sizes = {64, 32};
  c.seed = seed;
  c.sync_period = 200;
  c.buffer_capacity = 2000;
  c.epsilon = {1.0, 0.05, decay};
  c.adam.learning_rate = 1e-3;
  c.history_length = 2;
  return c;
}

}  // namespace

TEST_CASE("cost examples", "[drl]") {
  const auto p = CostParams::defaults(3, 1.0);
  CHECK_THAT(cost(0.275, 1, p), WithinAbs(0.8807970779778823, 1e-12));
  CHECK(cost(0.175, 3, p) == 0.0);
  CHECK(cost(0.01, 1, p) == 0.0);

  const auto q = CostParams::defaults(3, 0.0);
  for (double d : {0.0, 0.1, 0.5, 5.0}) {
    CHECK(cost(d, 1, q) == 0.0);
    CHECK_THAT(cost(d, 2, q), WithinAbs(1.0 / 3.0, 1e-15));
    CHECK_THAT(cost(d, 3, q), WithinAbs(2.0 / 3.0, 1e-15));
  }
  CHECK_THROWS_AS(cost(0.1, 0, p), Error);
  CostParams bad = p;
  bad.lambda = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("cost is monotone in set size and delay", "[drl][property]") {
  for (double lambda : {0.0, 0.1, 0.5, 0.9, 1.0}) {
    const auto p = CostParams::defaults(4, lambda);
    for (int size = 1; size <= 4; ++size)
      for (double d = 0.0; d < 1.0; d += 0.005) {
        if (size < 4) CHECK(cost(d, size, p) <= cost(d, size + 1, p));
        CHECK(cost(d, size, p) <= cost(d + 0.005, size, p));
      }
    if (lambda > 0.0) CHECK(cost(0.1755, 2, p) > cost(0.175, 2, p));
  }
}

TEST_CASE("action encoding is a bijection", "[drl][property]") {
  for (int n = 1; n <= 5; ++n) {
    CHECK(action_count(n) == (1u << n) - 1);
    for (std::size_t k = 0; k < action_count(n); ++k) {
      const auto s = action_to_set(k, n);
      CHECK(s.mask() == k + 1);
      CHECK(set_to_action(s) == k);
    }
  }
}

TEST_CASE("epsilon-greedy selection", "[drl]") {
  QAgent agent(3, 1, linear_config());
  const std::vector<double> s{1.0};

  set_linear(agent.mutable_online(), std::vector<double>(7, 0.0), {1, 0, 2, 3, 4, 5, 6});
  for (int k = 0; k < 50; ++k) CHECK(agent.select_action(s, 0.0) == ServerSet::from_ids({2}, 3));

  set_linear(agent.mutable_online(), std::vector<double>(7, 0.0), {0, 1, 1, 0, 1, 1, 1});
  CHECK(agent.select_action(s, 0.0) == ServerSet::from_ids({1}, 3));

  std::map<std::uint32_t, int> counts;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) ++counts[agent.select_action(s, 1.0).mask()];
  REQUIRE(counts.size() == 7);
  const double mean = draws / 7.0, sd = std::sqrt(draws * (1.0 / 7.0) * (6.0 / 7.0));
  for (const auto& [mask, c] : counts) CHECK(std::abs(c - mean) < 3 * sd);
  CHECK_THROWS_AS(agent.select_action(s, 1.5), Error);

  EpsilonSchedule e{1.0, 0.05, 100};
  CHECK(e.at(0) == 1.0);
  CHECK_THAT(e.at(50), WithinAbs(0.525, 1e-12));
  CHECK(e.at(100) == 0.05);
  CHECK(e.at(1000) == 0.05);
}

TEST_CASE("replay buffer", "[drl]") {
  ReplayBuffer small(2, 1);
  for (int k = 0; k < 3; ++k) small.store({{double(k)}, 0, double(k), {0.0}});
  CHECK(small.size() == 2);
  CHECK(small[0].cost == 1.0);
  CHECK(small[1].cost == 2.0);
  CHECK_FALSE(small.sample_indices(3).has_value());
  CHECK_FALSE(ReplayBuffer(5).sample_batch(1).has_value());

  ReplayBuffer buf(10, 7);
  for (int k = 0; k < 10; ++k) buf.store({{double(k)}, 0, double(k), {0.0}});
  for (std::size_t k : {3u, 6u, 10u}) {
    std::vector<int> counts(10, 0);
    const int batches = 10000;
    for (int b = 0; b < batches; ++b) {
      auto idx = *buf.sample_indices(k);
      std::sort(idx.begin(), idx.end());
      REQUIRE(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
      for (auto i : idx) ++counts[i];
    }
    const double p = static_cast<double>(k) / 10.0;
    const double sd = std::sqrt(batches * p * (1 - p));
    for (int c : counts) CHECK(std::abs(c - batches * p) <= std::max(3 * sd, 1e-9));
  }
}

TEST_CASE("gamma zero regresses onto the cost", "[drl]") {
  auto cfg = linear_config();
  cfg.hidden_sizes = {8};
  cfg.gamma = 0.0;
  cfg.adam.learning_rate = 1e-2;
  QAgent agent(2, 2, cfg);
  const Experience e{{0.3, -0.7}, 1, 0.42, {1.0, 1.0}};
  CHECK(agent.targets({&e}) == std::vector<double>{0.42});
  double loss = 1.0;
  for (int k = 0; k < 3000; ++k) {
    loss = agent.train_step({&e});
    CHECK(loss >= 0.0);
  }
  CHECK_THAT(agent.q_values(e.state)[1], WithinAbs(0.42, 1e-3));
}

TEST_CASE("double-Q targets by hand", "[drl]") {
  auto cfg = linear_config();
  cfg.gamma = 0.9;
  QAgent agent(2, 1, cfg);
  auto online = agent.online();
  auto target = agent.online();
  set_linear(online, {3, 1, 2}, {0, 0, 0});
  set_linear(target, {10, 20, 30}, {0, 0, 0});
  agent.restore(online, target, agent.adam(), 0);
  const Experience a{{0.0}, 0, 0.5, {1.0}};
  const Experience b{{0.0}, 2, 1.0, {-1.0}};
  const auto t = agent.targets({&a, &b});
  // Online picks action 1 for s'=1 and action 0 for s'=-1; target evaluates.
  CHECK_THAT(t[0], WithinAbs(0.5 + 0.9 * 20.0, 1e-12));
  CHECK_THAT(t[1], WithinAbs(1.0 + 0.9 * -10.0, 1e-12));
}

TEST_CASE("target network moves only on sync", "[drl]") {
  auto cfg = linear_config();
  cfg.hidden_sizes = {6};
  QAgent agent(2, 3, cfg);
  const auto initial = agent.online();
  CHECK(agent.target() == initial);
  const Experience e{{0.1, 0.2, 0.3}, 2, 1.0, {0.3, 0.2, 0.1}};
  for (int k = 0; k < 100; ++k) {
    agent.train_step({&e});
    REQUIRE(agent.target() == initial);
  }
  CHECK_FALSE(agent.online() == initial);
  const auto before = agent.targets({&e});
  agent.sync_target();
  CHECK(agent.target() == agent.online());
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int k = 0; k < 10; ++k) {
    const std::vector<double> s{g(rng), g(rng), g(rng)};
    CHECK(agent.target().forward(s) == agent.online().forward(s));
  }
  CHECK(agent.targets({&e}) != before);
  CHECK(agent.train_steps() == 100);
}

TEST_CASE("tabular toy MDP converges to value iteration", "[drl]") {
  // Two one-hot states, three actions, deterministic transitions.
  const double gamma = 0.5;
  const double c[2][3] = {{0.2, 0.6, 0.9}, {0.8, 0.1, 0.5}};
  const int next[2][3] = {{1, 0, 1}, {1, 0, 0}};
  double v[2] = {0, 0}, q[2][3];
  for (int it = 0; it < 200; ++it) {
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 3; ++a) q[s][a] = c[s][a] + gamma * v[next[s][a]];
    for (int s = 0; s < 2; ++s) v[s] = std::min({q[s][0], q[s][1], q[s][2]});
  }

  AgentConfig cfg;
  cfg.hidden_sizes = {32, 32};
  cfg.gamma = gamma;
  cfg.adam.learning_rate = 3e-3;
  QAgent agent(2, 2, cfg);
  std::vector<Experience> all;
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 3; ++a) {
      std::vector<double> x(2, 0.0), y(2, 0.0);
      x[static_cast<std::size_t>(s)] = 1.0;
      y[static_cast<std::size_t>(next[s][a])] = 1.0;
      all.push_back({x, static_cast<std::size_t>(a), c[s][a], y});
    }
  std::vector<const Experience*> batch;
  for (const auto& e : all) batch.push_back(&e);
  for (int step = 1; step <= 6000; ++step) {
    agent.train_step(batch);
    if (step % 100 == 0) agent.sync_target();
  }
  for (int s = 0; s < 2; ++s) {
    const auto qs = agent.q_values(all[static_cast<std::size_t>(3 * s)].state);
    for (int a = 0; a < 3; ++a) CHECK_THAT(qs[static_cast<std::size_t>(a)], WithinAbs(q[s][a], 0.05));
  }
}

TEST_CASE("delay-only objective replicates everywhere", "[drl]") {
  // The training trace is longer than the run so no task is replayed; the
  // policy is scored on an independent trace.
  const auto trace = generate_synthetic(coin_flip_trace(13000, 31));
  const auto held_out = generate_synthetic(coin_flip_trace(2500, 99));
  const auto cat = compact_catalog().fitted(trace, 0, trace.n_tasks());
  const auto params = CostParams::defaults(3, 1.0);
  auto cfg = small_agent(5, 4000);
  cfg.adam.learning_rate = 3e-4;
  cfg.sync_period = 500;
  cfg.cost_scale = 10.0;
  const auto trained = train_agent(trace, cat, params, cfg, {12000, 500});
  DrlController ctl(trained.agent);
  const auto r = run_episode(held_out, ctl, cat, {0.175, cfg.history_length});
  std::size_t all = 0;
  for (const auto& t : r.per_task) all += t.selected.size() == 3 ? 1 : 0;
  CHECK(static_cast<double>(all) / static_cast<double>(r.per_task.size()) >= 0.9);
}

TEST_CASE("seeded training is reproducible", "[drl]") {
  const auto trace = generate_synthetic(coin_flip_trace(400, 32));
  const auto cat = compact_catalog().fitted(trace, 0, trace.n_tasks());
  auto cfg = small_agent(9, 300);
  cfg.sync_period = 50;
  const auto a = train_agent(trace, cat, CostParams::defaults(3, 0.5), cfg, {900, 100});
  const auto b = train_agent(trace, cat, CostParams::defaults(3, 0.5), cfg, {900, 100});
  CHECK(training_log_csv(a.log) == training_log_csv(b.log));
  CHECK(a.agent.online() == b.agent.online());
  CHECK(a.agent.target() == b.agent.target());
  CHECK(a.log.size() == 9);
  CHECK(a.log.back().step == 900);
  cfg.seed = 10;
  const auto c = train_agent(trace, cat, CostParams::defaults(3, 0.5), cfg, {900, 100});
  CHECK_FALSE(c.agent.online() == a.agent.online());
}

TEST_CASE("larger lambda does not shrink the replica sets", "[drl][property]") {
  std::vector<double> lambdas, sizes;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto trace = generate_synthetic(coin_flip_trace(2000, 40 + seed));
    const auto cat = compact_catalog().fitted(trace, 0, trace.n_tasks());
    for (double lambda : {0.1, 0.2, 0.5}) {
      auto cfg = small_agent(seed, 1500);
      const auto trained = train_agent(trace, cat, CostParams::defaults(3, lambda), cfg, {3000, 500});
      DrlController ctl(trained.agent);
      lambdas.push_back(lambda);
      sizes.push_back(run_episode(trace, ctl, cat, {0.175, cfg.history_length}).summary.avg_set_size);
    }
  }
  CHECK(stats::spearman(lambdas, sizes) > 0.0);
}

TEST_CASE("agent checkpoints round-trip", "[drl][io]") {
  const auto trace = generate_synthetic(coin_flip_trace(300, 33));
  const auto cat = compact_catalog().fitted(trace, 0, trace.n_tasks());
  auto cfg = small_agent(4, 100);
  cfg.cost_scale = 10.0;
  const auto t = train_agent(trace, cat, CostParams::defaults(3, 0.3), cfg, {200, 50});
  std::stringstream ss;
  write_agent(ss, t);
  const auto back = read_agent(ss);
  CHECK(back.agent.online() == t.agent.online());
  CHECK(back.agent.target() == t.agent.target());
  CHECK(back.agent.adam() == t.agent.adam());
  CHECK(back.agent.train_steps() == t.agent.train_steps());
  CHECK(back.agent.config().cost_scale == 10.0);
  CHECK(back.catalog == cat);
  CHECK(back.cost.lambda == 0.3);
  const auto s = flatten(build_state(trace, cat, 10, 2, SelectionHistory(3, std::vector<ServerSet>(11, ServerSet::all(3)))));
  CHECK(back.agent.q_values(s) == t.agent.q_values(s));
}
