#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "redoff/csv.hpp"
#include "redoff/error.hpp"
#include "redoff/features.hpp"
#include "redoff/trace.hpp"

namespace redoff {

struct LogisticModel {
  Eigen::VectorXd weights;  // one per feature
  double intercept = 0.0;
  int iterations = 0;
  double objective = 0.0;

  /// (intercept, w_1 .. w_F)
  Eigen::VectorXd as_vector() const {
    Eigen::VectorXd v(weights.size() + 1);
    v(0) = intercept;
    v.tail(weights.size()) = weights;
    return v;
  }

  Eigen::VectorXd probabilities(const Eigen::MatrixXd& x) const {
    Eigen::ArrayXd z = (x * weights).array() + intercept;
    return (1.0 / (1.0 + (-z).exp())).matrix();
  }

  double accuracy(const Eigen::MatrixXd& x, const std::vector<int>& y) const {
    const auto p = probabilities(x);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
      hit += ((p(static_cast<Eigen::Index>(i)) > 0.5) == (y[i] == 1)) ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(y.size());
  }
};

struct L1LogisticOptions {
  int max_iterations = 5000;
  double tolerance = 1e-8;  // on objective change between iterations
};

namespace detail {

inline double log1p_exp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double logistic_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& yv, const Eigen::VectorXd& w,
                                 double b, double reg) {
  const Eigen::VectorXd z = (x * w).array() + b;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) loss += log1p_exp(z(i)) - yv(i) * z(i);
  return loss / static_cast<double>(z.size()) + reg * w.lpNorm<1>();
}

/// Largest eigenvalue of [X 1]^T [X 1] by power iteration.
inline double gram_spectral_norm(const Eigen::MatrixXd& x) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(x.cols() + 1).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd xv = x * v.head(x.cols());
    xv.array() += v(x.cols());
    Eigen::VectorXd next(x.cols() + 1);
    next.head(x.cols()) = x.transpose() * xv;
    next(x.cols()) = xv.sum();
    const double nrm = next.norm();
    if (nrm == 0.0) return 1.0;
    lambda = nrm;
    v = next / nrm;
  }
  return lambda * 1.01;
}

}  // namespace detail

/// Minimizes mean logistic loss + reg * ||w||_1 (intercept unpenalized) by
/// proximal gradient descent with a 1/Lipschitz step.
inline LogisticModel l1_logistic_train(const Eigen::MatrixXd& x, const std::vector<int>& y, double reg,
                                       L1LogisticOptions options = {}) {
  require(x.rows() >= 2 && static_cast<std::size_t>(x.rows()) == y.size(), ErrorKind::kValue,
          "need M >= 2 rows matching the label count");
  require(reg > 0.0, ErrorKind::kValue, "regularization strength must be positive");
  std::size_t pos = 0;
  for (int v : y) {
    require(v == 0 || v == 1, ErrorKind::kValue, "labels must be binary");
    pos += static_cast<std::size_t>(v);
  }
  require(pos > 0 && pos < y.size(), ErrorKind::kDegenerateLabels, "both classes must be present");

  const auto m = static_cast<double>(x.rows());
  Eigen::VectorXd yv(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) yv(i) = y[static_cast<std::size_t>(i)];
  const double step = 4.0 * m / detail::gram_spectral_norm(x);

  LogisticModel model;
  model.weights = Eigen::VectorXd::Zero(x.cols());
  double prev = detail::logistic_objective(x, yv, model.weights, model.intercept, reg);
  for (int it = 1; it <= options.max_iterations; ++it) {
    Eigen::ArrayXd z = (x * model.weights).array() + model.intercept;
    const Eigen::VectorXd resid = (1.0 / (1.0 + (-z).exp())).matrix() - yv;
    const Eigen::VectorXd grad_w = x.transpose() * resid / m;
    const double grad_b = resid.sum() / m;
    Eigen::VectorXd w = model.weights - step * grad_w;
    const double thresh = step * reg;
    w = w.unaryExpr([thresh](double v) {
      return v > thresh ? v - thresh : (v < -thresh ? v + thresh : 0.0);
    });
    model.weights = w;
    model.intercept -= step * grad_b;
    const double obj = detail::logistic_objective(x, yv, model.weights, model.intercept, reg);
    model.iterations = it;
    model.objective = obj;
    if (std::abs(prev - obj) < options.tolerance) break;
    prev = obj;
  }
  return model;
}

struct RfeOptions {
  std::size_t target_count = 1;
  /// Features dropped per round; 0 means 10% of the remaining (at least 1).
  std::size_t step = 0;
  double reg = 1e-2;
};

struct RfeRound {
  std::vector<std::size_t> features;  // column indices into the original X
  double validation_accuracy = 0.0;
  Eigen::VectorXd weights;  // standardized-scale weights for `features`
};

struct Relevance {
  std::size_t feature = 0;
  double normalized = 0.0;  // in [-1, 1], max magnitude exactly 1
};

struct RfeResult {
  std::vector<std::size_t> selected;
  std::vector<RfeRound> rounds;
  std::vector<Relevance> relevance;  // for `selected`, sorted by |relevance| desc
};

namespace detail {

inline Eigen::MatrixXd columns(const Eigen::MatrixXd& x, const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(cols[j]));
  return out;
}

}  // namespace detail

/// Recursive elimination: each round fits the L1 model on standardized
/// columns, scores on the validation split, and drops the `step` features
/// with smallest |weight|. Returns the round with the best validation
/// accuracy (ties prefer fewer features).
inline RfeResult recursive_feature_elimination(const Eigen::MatrixXd& x_train, const std::vector<int>& y_train,
                                               const Eigen::MatrixXd& x_val, const std::vector<int>& y_val,
                                               RfeOptions options = {}) {
  const auto F = static_cast<std::size_t>(x_train.cols());
  require(options.target_count >= 1, ErrorKind::kValue, "target_count must be >= 1");
  require(options.target_count <= F, ErrorKind::kValue, "target_count exceeds the feature count");
  require(x_val.cols() == x_train.cols() && x_val.rows() >= 1 && static_cast<std::size_t>(x_val.rows()) == y_val.size(),
          ErrorKind::kValue, "validation split must be nonempty with matching width");

  // Standardize with training statistics so |weight| is comparable.
  const Eigen::RowVectorXd mu = x_train.colwise().mean();
  Eigen::RowVectorXd sd = ((x_train.rowwise() - mu).array().square().colwise().mean()).sqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    if (sd(j) < 1e-12) sd(j) = 1.0;
  const Eigen::MatrixXd xt = (x_train.rowwise() - mu).array().rowwise() / sd.array();
  const Eigen::MatrixXd xv = (x_val.rowwise() - mu).array().rowwise() / sd.array();

  RfeResult result;
  std::vector<std::size_t> current(F);
  std::iota(current.begin(), current.end(), 0);
  while (true) {
    const auto model = l1_logistic_train(detail::columns(xt, current), y_train, options.reg);
    result.rounds.push_back({current, model.accuracy(detail::columns(xv, current), y_val), model.weights});
    if (current.size() <= options.target_count) break;
    std::size_t drop = options.step > 0 ? options.step : std::max<std::size_t>(1, current.size() / 10);
    drop = std::min(drop, current.size() - options.target_count);
    std::vector<std::size_t> order(current.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return std::abs(model.weights(static_cast<Eigen::Index>(a))) < std::abs(model.weights(static_cast<Eigen::Index>(b)));
    });
    std::vector<bool> dropped(current.size(), false);
    for (std::size_t k = 0; k < drop; ++k) dropped[order[k]] = true;
    std::vector<std::size_t> next;
    for (std::size_t k = 0; k < current.size(); ++k)
      if (!dropped[k]) next.push_back(current[k]);
    current = std::move(next);
  }

  std::size_t best = 0;
  for (std::size_t r = 1; r < result.rounds.size(); ++r)
    if (result.rounds[r].validation_accuracy >= result.rounds[best].validation_accuracy) best = r;
  const auto& chosen = result.rounds[best];
  result.selected = chosen.features;

  const double max_abs = chosen.weights.size() ? chosen.weights.cwiseAbs().maxCoeff() : 0.0;
  for (std::size_t k = 0; k < chosen.features.size(); ++k) {
    const double w = chosen.weights(static_cast<Eigen::Index>(k));
    result.relevance.push_back({chosen.features[k], max_abs > 0.0 ? w / max_abs : 0.0});
  }
  std::stable_sort(result.relevance.begin(), result.relevance.end(),
                   [](const auto& a, const auto& b) { return std::abs(a.normalized) > std::abs(b.normalized); });
  return result;
}

/// feature,block,normalized_relevance rows in descending |relevance|.
inline std::string relevance_csv(const RfeResult& r, const std::vector<std::string>& names,
                                 const std::vector<std::string>& blocks) {
  csv::Table t;
  t.header = {"feature", "block", "normalized_relevance"};
  for (const auto& rel : r.relevance)
    t.rows.push_back({names.at(rel.feature), blocks.at(rel.feature), csv::format(rel.normalized)});
  return t.to_string();
}

/// Rows are (task, server) pairs for tasks in [begin, end); columns are the
/// catalog's normalized current values; the label says whether that server's
/// next delay exceeds delta*.
struct ExceedanceDesign {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

inline ExceedanceDesign exceedance_design(const TraceDataset& d, const FeatureCatalog& catalog, double delta_star,
                                          std::int64_t begin, std::int64_t end) {
  require(begin >= 0 && begin < end && end < d.n_tasks(), ErrorKind::kValue, "invalid design range");
  const auto rows = static_cast<Eigen::Index>((end - begin) * d.n_servers());
  ExceedanceDesign out;
  out.x.resize(rows, static_cast<Eigen::Index>(catalog.size()));
  Eigen::Index r = 0;
  for (std::int64_t t = begin; t < end; ++t)
    for (int n = 1; n <= d.n_servers(); ++n, ++r) {
      for (std::size_t f = 0; f < catalog.size(); ++f)
        out.x(r, static_cast<Eigen::Index>(f)) = catalog.normalize(f, extract_feature(catalog.source(f), d, t, n));
      out.y.push_back(d.delay(t + 1, n) > delta_star ? 1 : 0);
    }
  return out;
}

}  // namespace redoff
