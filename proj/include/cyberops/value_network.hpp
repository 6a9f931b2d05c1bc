#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "cyberops/types.hpp"

namespace cyberops {

/// Fully connected Q-network: ReLU hidden layers, linear output.
class ValueNetwork {
 public:
  struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
  };

  struct Gradients {
    std::vector<Eigen::MatrixXd> weight;
    std::vector<Eigen::VectorXd> bias;

    double squared_norm() const {
      double s = 0.0;
      for (const auto& w : weight) s += w.squaredNorm();
      for (const auto& b : bias) s += b.squaredNorm();
      return s;
    }
    void scale(double f) {
      for (auto& w : weight) w *= f;
      for (auto& b : bias) b *= f;
    }
  };

  ValueNetwork() = default;

  ValueNetwork(std::size_t input_dim, std::size_t output_dim, std::vector<std::size_t> hidden, std::uint64_t seed)
      : input_dim_(input_dim), output_dim_(output_dim), hidden_(std::move(hidden)) {
    Rng rng(mix_seed(seed, 0x5eed));
    std::size_t fan_in = input_dim;
    std::vector<std::size_t> sizes = hidden_;
    sizes.push_back(output_dim);
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      const bool last = i + 1 == sizes.size();
      const double bound = last ? std::sqrt(1.0 / static_cast<double>(fan_in)) : std::sqrt(6.0 / static_cast<double>(fan_in));
      Layer l{Eigen::MatrixXd(sizes[i], fan_in), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sizes[i]))};
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = uniform_real(rng, -bound, bound);
      }
      layers_.push_back(std::move(l));
      fan_in = sizes[i];
    }
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  const std::vector<std::size_t>& hidden() const { return hidden_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  /// Columns of `x` are samples.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Eigen::MatrixXd z = layers_[i].weight * h;
      z.colwise() += layers_[i].bias;
      h = (i + 1 == layers_.size()) ? z : z.cwiseMax(0.0);
    }
    return h;
  }

  Eigen::VectorXd forward(std::span<const double> x) const {
    Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    return forward(Eigen::MatrixXd(v)).col(0);
  }

  /// Loss 0.5 * mean_b (Q(x_b, a_b) - y_b)^2 and its gradient.
  double loss_and_gradient(const Eigen::MatrixXd& x, std::span<const std::size_t> actions,
                           const Eigen::VectorXd& targets, Gradients& grad) const {
    const Eigen::Index batch = x.cols();
    std::vector<Eigen::MatrixXd> pre, act;
    act.push_back(x);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Eigen::MatrixXd z = layers_[i].weight * act.back();
      z.colwise() += layers_[i].bias;
      pre.push_back(z);
      act.push_back((i + 1 == layers_.size()) ? z : z.cwiseMax(0.0));
    }
    const Eigen::MatrixXd& q = act.back();
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(q.rows(), q.cols());
    double loss = 0.0;
    for (Eigen::Index b = 0; b < batch; ++b) {
      const auto a = static_cast<Eigen::Index>(actions[static_cast<std::size_t>(b)]);
      const double err = q(a, b) - targets(b);
      loss += 0.5 * err * err;
      delta(a, b) = err / static_cast<double>(batch);
    }
    loss /= static_cast<double>(batch);

    grad.weight.assign(layers_.size(), {});
    grad.bias.assign(layers_.size(), {});
    for (std::size_t i = layers_.size(); i-- > 0;) {
      grad.weight[i] = delta * act[i].transpose();
      grad.bias[i] = delta.rowwise().sum();
      if (i == 0) break;
      delta = (layers_[i].weight.transpose() * delta).cwiseProduct((pre[i - 1].array() > 0.0).cast<double>().matrix());
    }
    return loss;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& l : layers_) {
      out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
      out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return out;
  }

  void unflatten(std::span<const double> params) {
    if (params.size() != parameter_count()) throw LoadError("parameter count mismatch");
    std::size_t k = 0;
    for (auto& l : layers_) {
      std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(k), l.weight.size(), l.weight.data());
      k += static_cast<std::size_t>(l.weight.size());
      std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(k), l.bias.size(), l.bias.data());
      k += static_cast<std::size_t>(l.bias.size());
    }
  }

  std::uint64_t checksum() const {
    const auto p = flatten();
    return fnv1a(p.data(), p.size() * sizeof(double));
  }

  bool all_finite() const {
    for (const auto& l : layers_) {
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

 private:
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
  std::vector<std::size_t> hidden_;
  std::vector<Layer> layers_;
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr = 0.01, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ValueNetwork& net, const ValueNetwork::Gradients& g) {
    auto& layers = net.layers();
    if (m_.weight.empty()) {
      for (const auto& l : layers) {
        m_.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
        m_.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
      }
      v_ = m_;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
      m = beta1_ * m + (1.0 - beta1_) * grad;
      v = beta2_ * v + (1.0 - beta2_) * grad.cwiseProduct(grad);
      param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    };
    for (std::size_t i = 0; i < layers.size(); ++i) {
      update(layers[i].weight, g.weight[i], m_.weight[i], v_.weight[i]);
      update(layers[i].bias, g.bias[i], m_.bias[i], v_.bias[i]);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  ValueNetwork::Gradients m_, v_;
};

}  // namespace cyberops
