#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "redoff/error.hpp"

namespace redoff::nn {

enum class OutputActivation : std::uint8_t { kIdentity = 0, kSoftmax = 1 };

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct Layer {
  Matrix<Scalar> weight;  // out x in
  Vector<Scalar> bias;    // out
};

/// Parameter-shaped container, used for gradients and Adam moments.
template <typename Scalar>
struct ParamSet {
  std::vector<Layer<Scalar>> layers;

  void set_zero() {
    for (auto& l : layers) {
      l.weight.setZero();
      l.bias.setZero();
    }
  }
  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }
};

template <typename Scalar>
using Gradients = ParamSet<Scalar>;

/// Activations kept from a forward pass for backpropagation. Columns are samples.
template <typename Scalar>
struct ForwardCache {
  std::uint64_t version = 0;
  std::vector<Matrix<Scalar>> activations;  // [0] = input, [k] = ReLU output of hidden layer k
  Matrix<Scalar> logits;                    // pre-activation of the output layer
  Matrix<Scalar> output;
};

template <typename Scalar>
inline void softmax_columns(Matrix<Scalar>& z) {
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    auto col = z.col(c);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
}

/// Fully connected ReLU network with an identity or softmax head.
template <typename Scalar = double>
class DenseNet {
 public:
  DenseNet() = default;

  /// He-uniform weights, zero biases.
  DenseNet(std::vector<std::size_t> layer_sizes, OutputActivation output, std::uint64_t seed)
      : sizes_(std::move(layer_sizes)), output_(output) {
    require(sizes_.size() >= 2, ErrorKind::kValue, "network needs input and output sizes");
    for (auto s : sizes_) require(s >= 1, ErrorKind::kValue, "layer sizes must be positive");
    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k + 1 < sizes_.size(); ++k) {
      const auto in = static_cast<Eigen::Index>(sizes_[k]);
      const auto out = static_cast<Eigen::Index>(sizes_[k + 1]);
      const double limit = std::sqrt(6.0 / static_cast<double>(in));
      std::uniform_real_distribution<double> dist(-limit, limit);
      Layer<Scalar> layer{Matrix<Scalar>(out, in), Vector<Scalar>::Zero(out)};
      for (Eigen::Index j = 0; j < in; ++j)
        for (Eigen::Index i = 0; i < out; ++i) layer.weight(i, j) = static_cast<Scalar>(dist(rng));
      params_.layers.push_back(std::move(layer));
    }
  }

  const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  OutputActivation output_activation() const noexcept { return output_; }
  const ParamSet<Scalar>& params() const noexcept { return params_; }
  std::uint64_t version() const noexcept { return version_; }

  /// Mutable access invalidates outstanding forward caches.
  ParamSet<Scalar>& mutable_params() {
    ++version_;
    return params_;
  }

  ForwardCache<Scalar> forward_batch(const Matrix<Scalar>& inputs) const {
    require(static_cast<std::size_t>(inputs.rows()) == input_size(), ErrorKind::kDimension,
            "input has " + std::to_string(inputs.rows()) + " rows, network expects " +
                std::to_string(input_size()));
    ForwardCache<Scalar> cache;
    cache.version = version_;
    cache.activations.reserve(params_.layers.size());
    cache.activations.push_back(inputs);
    for (std::size_t k = 0; k + 1 < params_.layers.size(); ++k) {
      const auto& l = params_.layers[k];
      Matrix<Scalar> z = l.weight * cache.activations.back();
      z.colwise() += l.bias;
      cache.activations.push_back(z.cwiseMax(Scalar(0)));
    }
    const auto& last = params_.layers.back();
    cache.logits = last.weight * cache.activations.back();
    cache.logits.colwise() += last.bias;
    cache.output = cache.logits;
    if (output_ == OutputActivation::kSoftmax) softmax_columns(cache.output);
    return cache;
  }

  Matrix<Scalar> predict(const Matrix<Scalar>& inputs) const { return forward_batch(inputs).output; }

  std::vector<Scalar> forward(std::span<const Scalar> x) const {
    Matrix<Scalar> in(static_cast<Eigen::Index>(x.size()), 1);
    for (std::size_t i = 0; i < x.size(); ++i) in(static_cast<Eigen::Index>(i), 0) = x[i];
    const auto out = predict(in);
    return std::vector<Scalar>(out.data(), out.data() + out.size());
  }

  /// Gradients given dLoss/dLogits (pre-activation of the output layer).
  Gradients<Scalar> backward_logits(const ForwardCache<Scalar>& cache, const Matrix<Scalar>& logit_grad) const {
    require(cache.version == version_ && cache.activations.size() == params_.layers.size(),
            ErrorKind::kContractViolation, "forward cache is stale for this network");
    require(logit_grad.rows() == cache.logits.rows() && logit_grad.cols() == cache.logits.cols(),
            ErrorKind::kDimension, "output gradient shape mismatch");
    Gradients<Scalar> g;
    g.layers.resize(params_.layers.size());
    Matrix<Scalar> delta = logit_grad;
    for (std::size_t k = params_.layers.size(); k-- > 0;) {
      const auto& a = cache.activations[k];
      g.layers[k].weight = delta * a.transpose();
      g.layers[k].bias = delta.rowwise().sum();
      if (k > 0) {
        Matrix<Scalar> back = params_.layers[k].weight.transpose() * delta;
        delta = back.cwiseProduct((a.array() > Scalar(0)).template cast<Scalar>().matrix());
      }
    }
    return g;
  }

  /// Gradients given dLoss/dOutput; applies the softmax Jacobian when configured.
  Gradients<Scalar> backward(const ForwardCache<Scalar>& cache, const Matrix<Scalar>& output_grad) const {
    if (output_ == OutputActivation::kIdentity) return backward_logits(cache, output_grad);
    require(output_grad.rows() == cache.output.rows() && output_grad.cols() == cache.output.cols(),
            ErrorKind::kDimension, "output gradient shape mismatch");
    const auto& p = cache.output;
    Matrix<Scalar> dz = p.cwiseProduct(output_grad);
    const auto dots = dz.colwise().sum();
    for (Eigen::Index c = 0; c < dz.cols(); ++c) dz.col(c) -= p.col(c) * dots(c);
    return backward_logits(cache, dz);
  }

  bool all_finite() const { return params_.all_finite(); }

  friend bool operator==(const DenseNet& a, const DenseNet& b) {
    if (a.sizes_ != b.sizes_ || a.output_ != b.output_) return false;
    for (std::size_t k = 0; k < a.params_.layers.size(); ++k)
      if (a.params_.layers[k].weight != b.params_.layers[k].weight ||
          a.params_.layers[k].bias != b.params_.layers[k].bias)
        return false;
    return true;
  }

 private:
  std::vector<std::size_t> sizes_;
  OutputActivation output_ = OutputActivation::kIdentity;
  ParamSet<Scalar> params_;
  std::uint64_t version_ = 0;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar = double>
struct AdamState {
  AdamConfig config;
  std::int64_t step_count = 0;
  ParamSet<Scalar> first_moment;
  ParamSet<Scalar> second_moment;

  static AdamState for_net(const DenseNet<Scalar>& net, AdamConfig config = {}) {
    AdamState s;
    s.config = config;
    s.first_moment = net.params();
    s.first_moment.set_zero();
    s.second_moment = s.first_moment;
    return s;
  }

  friend bool operator==(const AdamState& a, const AdamState& b) {
    if (a.step_count != b.step_count || a.config.learning_rate != b.config.learning_rate ||
        a.config.beta1 != b.config.beta1 || a.config.beta2 != b.config.beta2 ||
        a.config.epsilon != b.config.epsilon)
      return false;
    for (std::size_t k = 0; k < a.first_moment.layers.size(); ++k) {
      const auto &am = a.first_moment.layers[k], &bm = b.first_moment.layers[k];
      const auto &av = a.second_moment.layers[k], &bv = b.second_moment.layers[k];
      if (am.weight != bm.weight || am.bias != bm.bias || av.weight != bv.weight || av.bias != bv.bias)
        return false;
    }
    return true;
  }
};

/// One bias-corrected Adam update. Throws on non-finite gradients or if the
/// update produces non-finite parameters.
template <typename Scalar>
void adam_step(DenseNet<Scalar>& net, const Gradients<Scalar>& grads, AdamState<Scalar>& state) {
  require(grads.layers.size() == net.params().layers.size(), ErrorKind::kDimension,
          "gradient layer count mismatch");
  for (std::size_t k = 0; k < grads.layers.size(); ++k)
    require(grads.layers[k].weight.rows() == net.params().layers[k].weight.rows() &&
                grads.layers[k].weight.cols() == net.params().layers[k].weight.cols() &&
                grads.layers[k].bias.size() == net.params().layers[k].bias.size(),
            ErrorKind::kDimension, "gradient shape mismatch");
  require(grads.all_finite(), ErrorKind::kTrainingDivergence, "non-finite gradient");

  const auto& c = state.config;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const auto lr = static_cast<Scalar>(c.learning_rate);
  const auto b1 = static_cast<Scalar>(c.beta1), b2 = static_cast<Scalar>(c.beta2);
  const auto corr1 = static_cast<Scalar>(1.0 - std::pow(c.beta1, t));
  const auto corr2 = static_cast<Scalar>(1.0 - std::pow(c.beta2, t));
  const auto eps = static_cast<Scalar>(c.epsilon);

  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / corr1) / ((v.array() / corr2).sqrt() + eps);
  };
  auto& params = net.mutable_params();
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    update(params.layers[k].weight, grads.layers[k].weight, state.first_moment.layers[k].weight,
           state.second_moment.layers[k].weight);
    update(params.layers[k].bias, grads.layers[k].bias, state.first_moment.layers[k].bias,
           state.second_moment.layers[k].bias);
  }
  require(net.all_finite(), ErrorKind::kTrainingDivergence, "parameters became non-finite");
}

struct LossAndGrad {
  double loss;
  double grad;
};

/// Quadratic inside |e| <= kappa, linear outside; e = prediction - target.
inline LossAndGrad huber_loss(double prediction, double target, double kappa = 1.0) {
  require(kappa > 0.0, ErrorKind::kValue, "huber kappa must be positive");
  const double e = prediction - target;
  const double a = std::abs(e);
  if (a <= kappa) return {0.5 * e * e, e};
  return {kappa * (a - 0.5 * kappa), e > 0 ? kappa : -kappa};
}

/// Cross-entropy of softmax(logits) against a class label via log-sum-exp.
/// Writes dLoss/dLogits into `grad`.
template <typename Derived, typename GradDerived>
double softmax_cross_entropy(const Eigen::MatrixBase<Derived>& logits, std::size_t label,
                             Eigen::MatrixBase<GradDerived>& grad) {
  const auto n = logits.size();
  require(static_cast<Eigen::Index>(label) < n, ErrorKind::kValue, "label outside output range");
  const double mx = logits.maxCoeff();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) sum += std::exp(logits(i) - mx);
  const double lse = mx + std::log(sum);
  for (Eigen::Index i = 0; i < n; ++i) grad(i) = std::exp(logits(i) - lse);
  grad(static_cast<Eigen::Index>(label)) -= 1.0;
  return lse - logits(static_cast<Eigen::Index>(label));
}

// -- binary serialization --------------------------------------------------

namespace io {

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(is), ErrorKind::kSchema, "truncated checkpoint");
  return v;
}

template <typename Scalar>
void put_params(std::ostream& os, const ParamSet<Scalar>& p) {
  for (const auto& l : p.layers) {
    os.write(reinterpret_cast<const char*>(l.weight.data()),
             static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(l.weight.size())));
    os.write(reinterpret_cast<const char*>(l.bias.data()),
             static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(l.bias.size())));
  }
}

template <typename Scalar>
void get_params(std::istream& is, ParamSet<Scalar>& p) {
  for (auto& l : p.layers) {
    is.read(reinterpret_cast<char*>(l.weight.data()),
            static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(l.weight.size())));
    is.read(reinterpret_cast<char*>(l.bias.data()),
            static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(l.bias.size())));
  }
  require(static_cast<bool>(is), ErrorKind::kSchema, "truncated checkpoint parameters");
}

}  // namespace io

template <typename Scalar>
void write_net(std::ostream& os, const DenseNet<Scalar>& net) {
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (auto s : net.layer_sizes()) io::put<std::uint64_t>(os, s);
  io::put<std::uint8_t>(os, static_cast<std::uint8_t>(net.output_activation()));
  io::put<std::uint32_t>(os, sizeof(Scalar));
  io::put_params(os, net.params());
}

template <typename Scalar>
DenseNet<Scalar> read_net(std::istream& is) {
  const auto count = io::get<std::uint32_t>(is);
  require(count >= 2 && count < 64, ErrorKind::kSchema, "implausible layer count in checkpoint");
  std::vector<std::size_t> sizes;
  for (std::uint32_t i = 0; i < count; ++i) sizes.push_back(io::get<std::uint64_t>(is));
  const auto act = io::get<std::uint8_t>(is);
  require(act <= 1, ErrorKind::kSchema, "unknown output activation in checkpoint");
  require(io::get<std::uint32_t>(is) == sizeof(Scalar), ErrorKind::kSchema, "checkpoint scalar width mismatch");
  DenseNet<Scalar> net(sizes, static_cast<OutputActivation>(act), 0);
  io::get_params(is, net.mutable_params());
  return net;
}

template <typename Scalar>
void write_adam(std::ostream& os, const AdamState<Scalar>& s) {
  io::put(os, s.config.learning_rate);
  io::put(os, s.config.beta1);
  io::put(os, s.config.beta2);
  io::put(os, s.config.epsilon);
  io::put<std::int64_t>(os, s.step_count);
  io::put_params(os, s.first_moment);
  io::put_params(os, s.second_moment);
}

template <typename Scalar>
AdamState<Scalar> read_adam(std::istream& is, const DenseNet<Scalar>& net) {
  AdamConfig c;
  c.learning_rate = io::get<double>(is);
  c.beta1 = io::get<double>(is);
  c.beta2 = io::get<double>(is);
  c.epsilon = io::get<double>(is);
  auto s = AdamState<Scalar>::for_net(net, c);
  s.step_count = io::get<std::int64_t>(is);
  io::get_params(is, s.first_moment);
  io::get_params(is, s.second_moment);
  return s;
}

}  // namespace redoff::nn
