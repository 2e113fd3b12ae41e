#pragma once

#include "expander/common.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace expander {

enum class Activation { relu, tanh };

struct NetworkConfig {
  /// Widths of the five hidden layers; the sixth layer maps to 2D.
  std::vector<int> hidden = {256, 256, 128, 64, 32};
  Activation activation = Activation::relu;
};

/// Six fully connected layers mapping R^d to the plane. All parameters live
/// in one flat vector so optimisers and finite-difference checks can treat
/// the network as a point in parameter space.
template <typename Scalar>
class Network {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  static constexpr int kLayers = 6;
  static constexpr int kOutput = 2;

  /// Activations recorded by a forward pass for use in backward().
  struct Tape {
    std::array<Mat, kLayers> inputs;  // input to each layer
    std::array<Mat, kLayers> pre;     // pre-activation output of each layer
  };

  Network() = default;

  Network(int input_dim, const NetworkConfig& config, std::uint64_t seed)
      : activation_(config.activation) {
    if (input_dim < 1) throw Error(ErrorCode::BadConfig, "input dimension must be >= 1");
    if (config.hidden.size() != kLayers - 1)
      throw Error(ErrorCode::BadConfig, "expected 5 hidden widths, got " +
                                            std::to_string(config.hidden.size()));
    widths_[0] = input_dim;
    for (int l = 0; l < kLayers - 1; ++l) {
      if (config.hidden[static_cast<std::size_t>(l)] < 1)
        throw Error(ErrorCode::BadConfig, "hidden widths must be >= 1");
      widths_[l + 1] = config.hidden[static_cast<std::size_t>(l)];
    }
    widths_[kLayers] = kOutput;

    Eigen::Index total = 0;
    for (int l = 0; l < kLayers; ++l) {
      weight_offset_[l] = total;
      total += static_cast<Eigen::Index>(widths_[l + 1]) * widths_[l];
      bias_offset_[l] = total;
      total += widths_[l + 1];
    }
    params_.resize(total);

    // Fan-in scaled uniform initialisation.
    Rng rng(seed);
    for (int l = 0; l < kLayers; ++l) {
      const double fan_in = widths_[l];
      const double wb = std::sqrt(6.0 / fan_in);
      const double bb = 1.0 / std::sqrt(fan_in);
      auto w = weight(l);
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = static_cast<Scalar>(rng.uniform(-wb, wb));
      auto b = bias(l);
      for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = static_cast<Scalar>(rng.uniform(-bb, bb));
    }
  }

  int input_dim() const noexcept { return widths_[0]; }
  int width(int layer) const noexcept { return widths_[layer]; }
  Activation activation() const noexcept { return activation_; }
  Eigen::Index parameter_count() const noexcept { return params_.size(); }

  Vec& parameters() noexcept { return params_; }
  const Vec& parameters() const noexcept { return params_; }

  /// Weight matrix of layer l, shape (out, in).
  Eigen::Map<Mat> weight(int l) {
    return {params_.data() + weight_offset_[l], widths_[l + 1], widths_[l]};
  }
  Eigen::Map<const Mat> weight(int l) const {
    return {params_.data() + weight_offset_[l], widths_[l + 1], widths_[l]};
  }
  Eigen::Map<Vec> bias(int l) { return {params_.data() + bias_offset_[l], widths_[l + 1]}; }
  Eigen::Map<const Vec> bias(int l) const {
    return {params_.data() + bias_offset_[l], widths_[l + 1]};
  }

  /// Rows of `x` are points; returns one 2D row per point.
  Mat forward(const Mat& x) const {
    Tape tape;
    return forward(x, tape);
  }

  Mat forward(const Mat& x, Tape& tape) const {
    if (x.cols() != widths_[0])
      throw Error(ErrorCode::DimensionMismatch, "network input width " +
                                                    std::to_string(widths_[0]) + ", got " +
                                                    std::to_string(x.cols()));
    Mat h = x;
    for (int l = 0; l < kLayers; ++l) {
      tape.inputs[l] = h;
      Mat z = h * weight(l).transpose();
      z.rowwise() += bias(l).transpose();
      tape.pre[l] = z;
      h = (l + 1 < kLayers) ? activate(z) : z;
    }
    return h;
  }

  /// Gradient of a scalar loss with respect to all parameters, given the
  /// gradient of that loss with respect to the network outputs.
  Vec backward(const Tape& tape, const Mat& d_output) const {
    Vec grad = Vec::Zero(params_.size());
    Mat delta = d_output;
    for (int l = kLayers - 1; l >= 0; --l) {
      Eigen::Map<Mat>(grad.data() + weight_offset_[l], widths_[l + 1], widths_[l]) =
          delta.transpose() * tape.inputs[l];
      Eigen::Map<Vec>(grad.data() + bias_offset_[l], widths_[l + 1]) =
          delta.colwise().sum().transpose();
      if (l > 0) {
        Mat d_in = delta * weight(l);
        delta = d_in.cwiseProduct(activate_derivative(tape.pre[l - 1]));
      }
    }
    return grad;
  }

  template <typename Other>
  Network<Other> cast() const {
    Network<Other> out;
    out.activation_ = activation_;
    out.widths_ = widths_;
    out.weight_offset_ = weight_offset_;
    out.bias_offset_ = bias_offset_;
    out.params_ = params_.template cast<Other>();
    return out;
  }

 private:
  template <typename>
  friend class Network;

  Mat activate(const Mat& z) const {
    if (activation_ == Activation::relu) return z.cwiseMax(Scalar(0));
    return z.array().tanh().matrix();
  }

  Mat activate_derivative(const Mat& z) const {
    if (activation_ == Activation::relu)
      return (z.array() > Scalar(0)).template cast<Scalar>().matrix();
    const auto t = z.array().tanh();
    return (Scalar(1) - t * t).matrix();
  }

  Activation activation_ = Activation::relu;
  std::array<int, kLayers + 1> widths_{};
  std::array<Eigen::Index, kLayers> weight_offset_{};
  std::array<Eigen::Index, kLayers> bias_offset_{};
  Vec params_;
};

/// Adam update over a flat parameter vector.
template <typename Scalar>
class Adam {
 public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit Adam(Eigen::Index size, Scalar lr = Scalar(1e-3), Scalar beta1 = Scalar(0.9),
                Scalar beta2 = Scalar(0.999), Scalar eps = Scalar(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Vec::Zero(size)), v_(Vec::Zero(size)) {}

  void step(Vec& params, const Vec& grad) {
    ++t_;
    m_ = beta1_ * m_ + (Scalar(1) - beta1_) * grad;
    v_ = beta2_ * v_ + (Scalar(1) - beta2_) * grad.cwiseAbs2();
    const Scalar c1 = Scalar(1) - std::pow(beta1_, static_cast<Scalar>(t_));
    const Scalar c2 = Scalar(1) - std::pow(beta2_, static_cast<Scalar>(t_));
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

 private:
  Scalar lr_, beta1_, beta2_, eps_;
  Vec m_, v_;
  long t_ = 0;
};

}  // namespace expander
