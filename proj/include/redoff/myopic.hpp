#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "redoff/controller.hpp"
#include "redoff/error.hpp"
#include "redoff/features.hpp"
#include "redoff/nn.hpp"
#include "redoff/server_set.hpp"
#include "redoff/trace.hpp"

namespace redoff {

/// y defaults to W/2 rounded up.
inline int default_exceed_count(int window) { return (window + 1) / 2; }

struct WindowPredictorConfig {
  int window = 1;           // W, future tasks considered
  int exceed_count = 1;     // y, exceedances within the window that make a positive label
  double delta_star = 0.175;
  std::vector<std::size_t> hidden_sizes{150, 50};
  int epochs = 100;
  std::size_t batch_size = 64;
  nn::AdamConfig adam;
  std::size_t history_length = 3;  // L
  double age_cap = kDefaultAgeCap;
  std::uint64_t seed = 1;
  bool allow_degenerate_labels = false;
  /// Training states hide a uniform 0..augment_missing most recent samples.
  std::size_t augment_missing = 0;

  void validate() const {
    require(window >= 1, ErrorKind::kConfig, "window W must be >= 1");
    require(exceed_count >= 1 && exceed_count <= window, ErrorKind::kConfig, "exceed count y must lie in [1, W]");
    require(delta_star > 0.0, ErrorKind::kConfig, "delta_star must be positive");
    require(epochs >= 1 && batch_size >= 1 && history_length >= 1, ErrorKind::kConfig,
            "epochs, batch size and history length must be positive");
    require(augment_missing < history_length, ErrorKind::kConfig, "augment_missing must be below L");
  }
};

/// Positive iff at least y of the W delays after task i exceed delta*.
inline int window_label(const TraceDataset& d, int server, std::int64_t i, int window, int exceed_count,
                        double delta_star) {
  require(i + window < d.n_tasks(), ErrorKind::kValue, "label window runs past the trace");
  int count = 0;
  for (int l = 1; l <= window; ++l) count += d.delay(i + l, server) > delta_star ? 1 : 0;
  return count >= exceed_count ? 1 : 0;
}

/// Two-class softmax network mapping one server's state to p(exceed).
struct PredictorModel {
  int server_id = 1;
  WindowPredictorConfig config;
  FeatureCatalog catalog;
  nn::DenseNet<double> net;
  double final_train_loss = 0.0;

  std::size_t input_size() const { return server_input_size(catalog.size(), config.history_length); }
};

/// Class-1 softmax probability for one server of a state.
inline double predict_exceed_prob(const PredictorModel& model, const FeatureState& state) {
  require(state.per_server.size() >= static_cast<std::size_t>(model.server_id), ErrorKind::kDimension,
          "state lacks the predictor's server");
  const auto& m = state.per_server[static_cast<std::size_t>(model.server_id - 1)];
  require(m.n_features == model.catalog.size() && m.history == model.config.history_length, ErrorKind::kDimension,
          "state shape does not match the predictor's catalog");
  const auto x = encode_server(state, model.server_id, model.config.age_cap);
  return model.net.forward(x)[1];
}

inline double predict_exceed_prob(const PredictorModel& model, std::span<const double> encoded) {
  require(encoded.size() == model.input_size(), ErrorKind::kDimension, "encoded state has the wrong length");
  return model.net.forward(encoded)[1];
}

enum class ExceedClass { kC0 = 0, kC1 = 1 };

/// C1 iff p > 1/2; exactly 1/2 is C0.
inline ExceedClass classify_binary(double p) {
  require(p >= 0.0 && p <= 1.0, ErrorKind::kValue, "probability outside [0,1]");
  return p > 0.5 ? ExceedClass::kC1 : ExceedClass::kC0;
}

/// Joint failure of a replica set: product of per-server exceedance
/// probabilities, multiplied in ascending server order.
inline double joint_failure(std::span<const double> p, std::uint32_t mask) {
  double prod = 1.0;
  for (std::size_t n = 0; n < p.size(); ++n)
    if ((mask >> n) & 1u) prod *= p[n];
  return prod;
}

/// Smallest set whose joint failure is below `delta`; equal-size candidates
/// are ranked by joint failure, then by lowest bitmask. Falls back to the
/// full set when nothing is feasible.
inline ServerSet select_min_cardinality(std::span<const double> p, double delta) {
  require(delta > 0.0 && delta < 1.0, ErrorKind::kValue, "Delta must lie in (0, 1)");
  const int n = static_cast<int>(p.size());
  require(n >= 1 && n <= kMaxServers, ErrorKind::kValue, "invalid server count");
  for (double v : p) require(v >= 0.0 && v <= 1.0, ErrorKind::kValue, "probabilities must lie in [0,1]");
  const std::uint32_t full = ServerSet::full_mask(n);
  for (int k = 1; k <= n; ++k) {
    std::uint32_t best_mask = 0;
    double best = 2.0;
    for (std::uint32_t mask = 1; mask <= full; ++mask) {
      if (std::popcount(mask) != k) continue;
      const double f = joint_failure(p, mask);
      if (f < best) {
        best = f;
        best_mask = mask;
      }
    }
    if (best < delta) return ServerSet::from_mask(best_mask, n);
  }
  return ServerSet::all(n);
}

/// Selection history where every task used the same set.
inline SelectionHistory constant_history(int n_servers, std::int64_t n_tasks, const ServerSet& set) {
  SelectionHistory h(n_servers);
  for (std::int64_t t = 0; t < n_tasks; ++t) h.push_back(set);
  return h;
}

/// Encoded per-server inputs and window labels for one server.
struct LabeledSet {
  nn::Matrix<double> inputs;  // input_size x M
  std::vector<int> labels;
  std::vector<std::int64_t> task_indices;
};

/// States i in [reach, M-1-W] with inputs masked according to `history`,
/// then the `hide_recent` newest samples hidden. A nonzero `augment_seed`
/// instead draws the hidden count per state from 0..cfg.augment_missing.
inline LabeledSet labeled_set(const TraceDataset& d, const SelectionHistory& history, const FeatureCatalog& catalog,
                              const WindowPredictorConfig& cfg, int server, std::size_t hide_recent = 0,
                              std::uint64_t augment_seed = 0) {
  std::mt19937_64 rng(augment_seed);
  std::uniform_int_distribution<std::size_t> hide_dist(0, cfg.augment_missing);
  const auto reach = static_cast<std::int64_t>(cfg.history_length - 1) * catalog.max_lag_step();
  const std::int64_t last = d.n_tasks() - 1 - cfg.window;
  require(last >= reach, ErrorKind::kValue, "trace too short for the label window");
  LabeledSet out;
  const auto m = static_cast<Eigen::Index>(last - reach + 1);
  out.inputs.resize(static_cast<Eigen::Index>(server_input_size(catalog.size(), cfg.history_length)), m);
  for (std::int64_t i = reach; i <= last; ++i) {
    auto state = build_state(d, catalog, i, cfg.history_length, history);
    const std::size_t hide = augment_seed != 0 ? hide_dist(rng) : hide_recent;
    if (hide > 0) mask_recent(state, catalog, server, hide);
    encode_server_into(state, server, cfg.age_cap, out.inputs.col(static_cast<Eigen::Index>(i - reach)).data());
    out.labels.push_back(window_label(d, server, i, cfg.window, cfg.exceed_count, cfg.delta_star));
    out.task_indices.push_back(i);
  }
  return out;
}

/// Mini-batch Adam on softmax cross-entropy. Returns the mean loss of the last epoch.
inline double train_classifier(nn::DenseNet<double>& net, const nn::Matrix<double>& inputs,
                               const std::vector<int>& labels, int epochs, std::size_t batch_size,
                               nn::AdamConfig adam_config, std::uint64_t seed) {
  require(static_cast<std::size_t>(inputs.cols()) == labels.size() && !labels.empty(), ErrorKind::kDimension,
          "inputs and labels disagree in length");
  auto adam = nn::AdamState<double>::for_net(net, adam_config);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  const auto in = inputs.rows();
  double epoch_loss = 0.0;
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      const auto b = static_cast<Eigen::Index>(end - start);
      nn::Matrix<double> x(in, b);
      for (Eigen::Index k = 0; k < b; ++k) x.col(k) = inputs.col(static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(k)]));
      const auto cache = net.forward_batch(x);
      nn::Matrix<double> grad(cache.logits.rows(), b);
      for (Eigen::Index k = 0; k < b; ++k) {
        auto g = grad.col(k);
        epoch_loss += nn::softmax_cross_entropy(cache.logits.col(k),
                                                static_cast<std::size_t>(labels[order[start + static_cast<std::size_t>(k)]]), g);
      }
      grad /= static_cast<double>(b);
      nn::adam_step(net, net.backward_logits(cache, grad), adam);
    }
    epoch_loss /= static_cast<double>(order.size());
  }
  return epoch_loss;
}

/// One predictor per server, trained on states masked by `history` (the
/// selection policy the training trace was recorded or replayed under).
inline std::vector<PredictorModel> train_predictor(const TraceDataset& d, const SelectionHistory& history,
                                                   const FeatureCatalog& catalog, const WindowPredictorConfig& cfg) {
  cfg.validate();
  std::vector<PredictorModel> models;
  for (int n = 1; n <= d.n_servers(); ++n) {
    const std::uint64_t aug = cfg.augment_missing > 0 ? cfg.seed * 104729ull + static_cast<std::uint64_t>(n) + 1 : 0;
    auto data = labeled_set(d, history, catalog, cfg, n, 0, aug);
    const auto positives = std::accumulate(data.labels.begin(), data.labels.end(), std::size_t{0});
    if (!cfg.allow_degenerate_labels)
      require(positives > 0 && positives < data.labels.size(), ErrorKind::kDegenerateLabels,
              "server " + std::to_string(n) + " training labels are all one class");
    PredictorModel model;
    model.server_id = n;
    model.config = cfg;
    model.catalog = catalog;
    std::vector<std::size_t> sizes{server_input_size(catalog.size(), cfg.history_length)};
    sizes.insert(sizes.end(), cfg.hidden_sizes.begin(), cfg.hidden_sizes.end());
    sizes.push_back(2);
    model.net = nn::DenseNet<double>(sizes, nn::OutputActivation::kSoftmax, cfg.seed * 1000003ull + static_cast<std::uint64_t>(n));
    model.final_train_loss = train_classifier(model.net, data.inputs, data.labels, cfg.epochs, cfg.batch_size,
                                              cfg.adam, cfg.seed * 7919ull + static_cast<std::uint64_t>(n));
    models.push_back(std::move(model));
  }
  return models;
}

/// One-shot controller: predict each server's exceedance probability and
/// pick the minimum-cardinality set meeting the Delta bound.
class MyopicController : public Controller {
 public:
  MyopicController(std::vector<PredictorModel> models, double delta) : models_(std::move(models)), delta_(delta) {
    require(!models_.empty(), ErrorKind::kValue, "myopic controller needs one predictor per server");
    require(delta > 0.0 && delta < 1.0, ErrorKind::kValue, "Delta must lie in (0, 1)");
  }

  ServerSet select(const FeatureState& state) override {
    require(state.per_server.size() == models_.size(), ErrorKind::kDimension, "predictor count != server count");
    last_probabilities_.clear();
    for (const auto& m : models_) last_probabilities_.push_back(predict_exceed_prob(m, state));
    return select_min_cardinality(last_probabilities_, delta_);
  }

  std::string name() const override { return "myopic"; }
  const std::vector<double>& last_probabilities() const noexcept { return last_probabilities_; }
  double delta() const noexcept { return delta_; }

 private:
  std::vector<PredictorModel> models_;
  double delta_;
  std::vector<double> last_probabilities_;
};

}  // namespace redoff
