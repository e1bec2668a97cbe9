#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "redoff/controller.hpp"
#include "redoff/csv.hpp"
#include "redoff/error.hpp"
#include "redoff/features.hpp"
#include "redoff/nn.hpp"
#include "redoff/server_set.hpp"
#include "redoff/trace.hpp"

namespace redoff {

struct CostParams {
  double lambda = 0.5;
  double alpha_delay = 20.0;
  double kappa_delay = 20.0 * 0.175;
  double alpha_set = 1.0 / 3.0;
  double kappa_set = 1.0 / 3.0;
  double delta_star = 0.175;

  /// Sigmoid centred at delta*, set cost zero for a singleton.
  static CostParams defaults(int n_servers, double lambda, double delta_star = 0.175) {
    CostParams p;
    p.lambda = lambda;
    p.delta_star = delta_star;
    p.alpha_delay = 20.0;
    p.kappa_delay = p.alpha_delay * delta_star;
    p.alpha_set = 1.0 / n_servers;
    p.kappa_set = 1.0 / n_servers;
    return p;
  }

  void validate() const {
    require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::kConfig, "lambda must lie in [0,1]");
    require(alpha_delay > 0.0 && alpha_set > 0.0, ErrorKind::kConfig, "alpha_delay and alpha_set must be positive");
    require(delta_star > 0.0, ErrorKind::kConfig, "delta_star must be positive");
  }
};

inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

inline double cost(double delta_min, int set_size, const CostParams& p) {
  require(set_size >= 1, ErrorKind::kValue, "set size must be >= 1");
  require(delta_min >= 0.0, ErrorKind::kValue, "delta_min must be nonnegative");
  const double delay_term = delta_min > p.delta_star ? sigmoid(p.alpha_delay * delta_min - p.kappa_delay) : 0.0;
  return p.lambda * delay_term + (1.0 - p.lambda) * (p.alpha_set * set_size - p.kappa_set);
}

struct Experience {
  std::vector<double> state;
  std::size_t action = 0;
  double cost = 0.0;
  std::vector<double> next_state;
};

/// Fixed-capacity FIFO store with uniform sampling without replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity, std::uint64_t seed = 0) : capacity_(capacity), rng_(seed) {
    require(capacity >= 1, ErrorKind::kValue, "replay capacity must be positive");
  }

  void store(Experience e) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(e));
  }

  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const Experience& operator[](std::size_t i) const { return items_.at(i); }

  /// Indices of k distinct stored items, or nullopt while the buffer holds fewer than k.
  std::optional<std::vector<std::size_t>> sample_indices(std::size_t k) {
    if (k == 0 || items_.size() < k) return std::nullopt;
    std::vector<std::size_t> out;
    out.reserve(k);
    if (2 * k > items_.size()) {
      std::vector<std::size_t> all(items_.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
        std::swap(all[i], all[pick(rng_)]);
        out.push_back(all[i]);
      }
      return out;
    }
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    while (out.size() < k) {
      const auto c = pick(rng_);
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
    return out;
  }

  std::optional<std::vector<const Experience*>> sample_batch(std::size_t k) {
    auto idx = sample_indices(k);
    if (!idx) return std::nullopt;
    std::vector<const Experience*> out;
    for (auto i : *idx) out.push_back(&items_[i]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::deque<Experience> items_;
  std::mt19937_64 rng_;
};

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  std::int64_t decay_steps = 20000;

  double at(std::int64_t step) const {
    if (decay_steps <= 0 || step >= decay_steps) return end;
    return start + (end - start) * static_cast<double>(step) / static_cast<double>(decay_steps);
  }
};

struct AgentConfig {
  std::vector<std::size_t> hidden_sizes{200, 100, 50};
  double gamma = 0.9;
  std::size_t buffer_capacity = 10000;
  std::size_t batch_size = 64;
  std::int64_t sync_period = 500;
  EpsilonSchedule epsilon;
  nn::AdamConfig adam;
  double huber_kappa = 1.0;
  /// Costs are multiplied by this before learning; the greedy policy is unchanged.
  double cost_scale = 1.0;
  std::size_t history_length = 3;
  double age_cap = kDefaultAgeCap;
  std::uint64_t seed = 1;

  void validate() const {
    require(gamma >= 0.0 && gamma < 1.0, ErrorKind::kConfig, "gamma must lie in [0,1)");
    require(buffer_capacity >= batch_size && batch_size >= 1, ErrorKind::kConfig,
            "buffer capacity must be at least the batch size");
    require(sync_period >= 1, ErrorKind::kConfig, "sync period must be positive");
    require(epsilon.start >= 0.0 && epsilon.start <= 1.0 && epsilon.end >= 0.0 && epsilon.end <= 1.0,
            ErrorKind::kConfig, "epsilon values must lie in [0,1]");
    require(history_length >= 1, ErrorKind::kConfig, "history length must be positive");
    require(cost_scale > 0.0, ErrorKind::kConfig, "cost_scale must be positive");
  }
};

/// Q-network pair over the 2^N-1 replica sets. Q-values are expected costs;
/// lower is better.
class QAgent {
 public:
  QAgent() = default;

  QAgent(int n_servers, std::size_t input_size, AgentConfig config)
      : config_(std::move(config)), n_servers_(n_servers), input_size_(input_size), rng_(config_.seed) {
    config_.validate();
    require(n_servers >= 1 && n_servers <= kMaxServers, ErrorKind::kValue, "invalid server count");
    std::vector<std::size_t> sizes{input_size};
    sizes.insert(sizes.end(), config_.hidden_sizes.begin(), config_.hidden_sizes.end());
    sizes.push_back(action_count(n_servers));
    online_ = nn::DenseNet<double>(sizes, nn::OutputActivation::kIdentity, config_.seed * 2654435761ull + 17);
    target_ = online_;
    adam_ = nn::AdamState<double>::for_net(online_, config_.adam);
  }

  int n_servers() const noexcept { return n_servers_; }
  std::size_t input_size() const noexcept { return input_size_; }
  const AgentConfig& config() const noexcept { return config_; }
  const nn::DenseNet<double>& online() const noexcept { return online_; }
  const nn::DenseNet<double>& target() const noexcept { return target_; }
  nn::DenseNet<double>& mutable_online() noexcept { return online_; }
  const nn::AdamState<double>& adam() const noexcept { return adam_; }
  std::int64_t train_steps() const noexcept { return train_steps_; }

  std::vector<double> q_values(std::span<const double> state) const {
    require(state.size() == input_size_, ErrorKind::kDimension, "state length does not match the agent");
    return online_.forward(state);
  }

  /// Argmin of online Q, lowest index on ties.
  std::size_t greedy_action(std::span<const double> state) const {
    const auto q = q_values(state);
    return static_cast<std::size_t>(std::min_element(q.begin(), q.end()) - q.begin());
  }

  ServerSet select_action(std::span<const double> state, double epsilon) {
    require(epsilon >= 0.0 && epsilon <= 1.0, ErrorKind::kValue, "epsilon must lie in [0,1]");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (epsilon > 0.0 && u(rng_) < epsilon) {
      std::uniform_int_distribution<std::size_t> pick(0, action_count(n_servers_) - 1);
      return action_to_set(pick(rng_), n_servers_);
    }
    return action_to_set(greedy_action(state), n_servers_);
  }

  /// Double-Q targets for a batch: c + gamma * Q_target(s', argmin_a Q_online(s', a)).
  std::vector<double> targets(const std::vector<const Experience*>& batch) const {
    const auto b = static_cast<Eigen::Index>(batch.size());
    nn::Matrix<double> next(static_cast<Eigen::Index>(input_size_), b);
    for (Eigen::Index k = 0; k < b; ++k) {
      const auto& s = batch[static_cast<std::size_t>(k)]->next_state;
      require(s.size() == input_size_, ErrorKind::kDimension, "experience next_state has the wrong length");
      next.col(k) = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
    }
    const auto q_online = online_.forward_batch(next).output;
    const auto q_target = target_.forward_batch(next).output;
    std::vector<double> out(batch.size());
    for (Eigen::Index k = 0; k < b; ++k) {
      Eigen::Index best = 0;
      q_online.col(k).minCoeff(&best);
      out[static_cast<std::size_t>(k)] = batch[static_cast<std::size_t>(k)]->cost + config_.gamma * q_target(best, k);
    }
    return out;
  }

  /// One Adam step on the Huber loss of the taken actions. Returns the mean loss.
  double train_step(const std::vector<const Experience*>& batch) {
    require(!batch.empty(), ErrorKind::kValue, "training batch is empty");
    const auto tgt = targets(batch);
    const auto b = static_cast<Eigen::Index>(batch.size());
    nn::Matrix<double> x(static_cast<Eigen::Index>(input_size_), b);
    for (Eigen::Index k = 0; k < b; ++k) {
      const auto& s = batch[static_cast<std::size_t>(k)]->state;
      require(s.size() == input_size_, ErrorKind::kDimension, "experience state has the wrong length");
      x.col(k) = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
    }
    const auto cache = online_.forward_batch(x);
    nn::Matrix<double> grad = nn::Matrix<double>::Zero(cache.output.rows(), b);
    double loss = 0.0;
    for (Eigen::Index k = 0; k < b; ++k) {
      const auto a = static_cast<Eigen::Index>(batch[static_cast<std::size_t>(k)]->action);
      require(a < grad.rows(), ErrorKind::kValue, "experience action outside the action space");
      const auto lg = nn::huber_loss(cache.output(a, k), tgt[static_cast<std::size_t>(k)], config_.huber_kappa);
      loss += lg.loss;
      grad(a, k) = lg.grad / static_cast<double>(b);
    }
    loss /= static_cast<double>(b);
    require(std::isfinite(loss), ErrorKind::kTrainingDivergence, "non-finite Q-learning loss");
    nn::adam_step(online_, online_.backward_logits(cache, grad), adam_);
    ++train_steps_;
    return loss;
  }

  void sync_target() { target_ = online_; }

  /// Restores networks and optimizer state, for checkpoint loading.
  void restore(nn::DenseNet<double> online, nn::DenseNet<double> target, nn::AdamState<double> adam,
               std::int64_t train_steps) {
    require(online.layer_sizes() == online_.layer_sizes() && target.layer_sizes() == online_.layer_sizes(),
            ErrorKind::kSchema, "checkpoint network shape does not match the agent");
    online_ = std::move(online);
    target_ = std::move(target);
    adam_ = std::move(adam);
    train_steps_ = train_steps;
  }

 private:
  AgentConfig config_;
  int n_servers_ = 0;
  std::size_t input_size_ = 0;
  nn::DenseNet<double> online_;
  nn::DenseNet<double> target_;
  nn::AdamState<double> adam_;
  std::mt19937_64 rng_;
  std::int64_t train_steps_ = 0;
};

struct TrainingSchedule {
  std::int64_t total_steps = 25000;
  std::int64_t log_every = 250;
};

struct TrainingLogRow {
  std::int64_t step = 0;
  double epsilon = 0.0;
  double loss = 0.0;              // mean over the training steps since the last row
  double running_mean_cost = 0.0; // mean cost since the last row
  double mean_set_size = 0.0;
};

inline std::string training_log_csv(const std::vector<TrainingLogRow>& log) {
  csv::Table t;
  t.header = {"step", "epsilon", "loss", "running_mean_cost", "mean_set_size"};
  for (const auto& r : log)
    t.rows.push_back({std::to_string(r.step), csv::format(r.epsilon), csv::format(r.loss),
                      csv::format(r.running_mean_cost), csv::format(r.mean_set_size)});
  return t.to_string();
}

struct TrainedAgent {
  QAgent agent;
  FeatureCatalog catalog;
  CostParams cost;
  std::vector<TrainingLogRow> log;
};

/// Interacts with the trace task by task; the trace is replayed from the
/// start (with a fresh all-servers warm-up) whenever it runs out.
inline TrainedAgent train_agent(const TraceDataset& trace, const FeatureCatalog& catalog, const CostParams& params,
                                const AgentConfig& config, const TrainingSchedule& schedule) {
  params.validate();
  config.validate();
  const int n = trace.n_servers();
  const std::size_t L = config.history_length;
  const auto warm = static_cast<std::int64_t>(L - 1) * catalog.max_lag_step() + 1;
  require(trace.n_tasks() > warm + 1, ErrorKind::kInsufficientHistory, "trace too short for one interaction");
  require(schedule.total_steps >= 1 && schedule.log_every >= 1, ErrorKind::kConfig, "invalid training schedule");

  TrainedAgent out{QAgent(n, state_input_size(n, catalog.size(), L), config), catalog, params, {}};
  auto& agent = out.agent;
  ReplayBuffer buffer(config.buffer_capacity, config.seed ^ 0x9e3779b97f4a7c15ull);

  SelectionHistory history(n);
  std::int64_t i = 0;
  std::vector<double> state;
  auto restart = [&] {
    history = SelectionHistory(n);
    for (i = 0; i < warm; ++i) history.push_back(ServerSet::all(n));
    state = flatten(build_state(trace, catalog, i - 1, L, history), config.age_cap);
  };
  restart();

  double loss_sum = 0.0, cost_sum = 0.0, size_sum = 0.0;
  std::int64_t loss_count = 0, window = 0;
  for (std::int64_t step = 0; step < schedule.total_steps; ++step) {
    if (i >= trace.n_tasks()) restart();
    const double eps = config.epsilon.at(step);
    const auto set = agent.select_action(state, eps);
    double dmin = std::numeric_limits<double>::infinity();
    for (int id : set.ids()) dmin = std::min(dmin, trace.delay(i, id));
    const double c = cost(dmin, set.size(), params);
    history.push_back(set);
    auto next = flatten(build_state(trace, catalog, i, L, history), config.age_cap);
    buffer.store({state, set_to_action(set), c * config.cost_scale, next});
    state = std::move(next);
    ++i;

    if (auto batch = buffer.sample_batch(config.batch_size)) {
      loss_sum += agent.train_step(*batch);
      ++loss_count;
    }
    if ((step + 1) % config.sync_period == 0) agent.sync_target();

    cost_sum += c;
    size_sum += set.size();
    ++window;
    if ((step + 1) % schedule.log_every == 0 || step + 1 == schedule.total_steps) {
      out.log.push_back({step + 1, eps, loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0,
                         cost_sum / static_cast<double>(window), size_sum / static_cast<double>(window)});
      loss_sum = cost_sum = size_sum = 0.0;
      loss_count = window = 0;
    }
  }
  return out;
}

/// Greedy (or fixed-epsilon) policy of a trained agent.
class DrlController : public Controller {
 public:
  explicit DrlController(QAgent agent, double epsilon = 0.0) : agent_(std::move(agent)), epsilon_(epsilon) {}

  ServerSet select(const FeatureState& state) override {
    return agent_.select_action(flatten(state, agent_.config().age_cap), epsilon_);
  }
  std::string name() const override { return "drl"; }
  const QAgent& agent() const noexcept { return agent_; }

 private:
  QAgent agent_;
  double epsilon_;
};

}  // namespace redoff
