#ifndef UWE_LAYERS_HPP
#define UWE_LAYERS_HPP

#include "uwe/tensor.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace uwe {

enum class Mode { train, eval };

/// A trainable array and its accumulated gradient.
template <typename Scalar>
struct Param {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix<Scalar>::Zero(rows, cols)), grad(Matrix<Scalar>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

/// Non-trainable state that still belongs in a checkpoint (running moments).
template <typename Scalar>
struct Buffer {
  std::string name;
  Matrix<Scalar>* value;
};

template <typename Scalar>
struct ParamList {
  std::vector<Param<Scalar>*> params;
  std::vector<Buffer<Scalar>> buffers;

  Eigen::Index count() const {
    Eigen::Index total = 0;
    for (const auto* p : params) total += p->value.size();
    return total;
  }
};

// ---------------------------------------------------------------------------
// 3x3 convolution, stride 1, zero padding 1.
//
// Weight layout is (out_channels) x (9 * in_channels); column index
// (ky * 3 + kx) * in_channels + ci, so an im2col column is nine stacked
// neighbour pixel vectors.

namespace detail {

constexpr Eigen::Index kConvChunk = 4096;

template <typename Scalar>
void im2col3x3(const Tensor<Scalar>& x, Eigen::Index first, Eigen::Index count, Matrix<Scalar>& col) {
  const int cin = x.c;
  col.resize(9 * cin, count);
  const Eigen::Index hw = x.pixels_per_image();
  for (Eigen::Index j = 0; j < count; ++j) {
    const Eigen::Index p = first + j;
    const int img = static_cast<int>(p / hw);
    const int rem = static_cast<int>(p % hw);
    const int y = rem / x.w;
    const int xx = rem % x.w;
    for (int ky = 0; ky < 3; ++ky) {
      const int sy = y + ky - 1;
      for (int kx = 0; kx < 3; ++kx) {
        const int sx = xx + kx - 1;
        auto dst = col.block((ky * 3 + kx) * cin, j, cin, 1);
        if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) {
          dst.setZero();
        } else {
          dst = x.data.col(x.index(img, sy, sx));
        }
      }
    }
  }
}

template <typename Scalar>
void col2im3x3_add(const Matrix<Scalar>& col, Eigen::Index first, Tensor<Scalar>& dx) {
  const int cin = dx.c;
  const Eigen::Index hw = dx.pixels_per_image();
  for (Eigen::Index j = 0; j < col.cols(); ++j) {
    const Eigen::Index p = first + j;
    const int img = static_cast<int>(p / hw);
    const int rem = static_cast<int>(p % hw);
    const int y = rem / dx.w;
    const int xx = rem % dx.w;
    for (int ky = 0; ky < 3; ++ky) {
      const int sy = y + ky - 1;
      if (sy < 0 || sy >= dx.h) continue;
      for (int kx = 0; kx < 3; ++kx) {
        const int sx = xx + kx - 1;
        if (sx < 0 || sx >= dx.w) continue;
        dx.data.col(dx.index(img, sy, sx)) += col.block((ky * 3 + kx) * cin, j, cin, 1);
      }
    }
  }
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> conv3x3(const Matrix<Scalar>& weight, const Vector<Scalar>& bias, const Tensor<Scalar>& x) {
  if (weight.cols() != 9 * x.c) {
    throw ShapeError("conv3x3: weight expects " + std::to_string(weight.cols() / 9) + " input channels, got " +
                     std::to_string(x.c));
  }
  if (x.h < 1 || x.w < 1) throw ShapeError("conv3x3: empty spatial dims");
  Tensor<Scalar> out(x.n, static_cast<int>(weight.rows()), x.h, x.w);
  Matrix<Scalar> col;
  for (Eigen::Index first = 0; first < x.pixels(); first += detail::kConvChunk) {
    const Eigen::Index count = std::min(detail::kConvChunk, x.pixels() - first);
    detail::im2col3x3(x, first, count, col);
    out.data.middleCols(first, count).noalias() = weight * col;
  }
  out.data.colwise() += bias;
  return out;
}

/// Returns dL/dx and accumulates dL/dW, dL/db when the pointers are non-null.
template <typename Scalar>
Tensor<Scalar> conv3x3_backward(const Matrix<Scalar>& weight, const Tensor<Scalar>& x, const Tensor<Scalar>& grad_out,
                                Matrix<Scalar>* grad_weight, Matrix<Scalar>* grad_bias) {
  Tensor<Scalar> dx = Tensor<Scalar>::zeros_like(x);
  Matrix<Scalar> col;
  Matrix<Scalar> dcol;
  for (Eigen::Index first = 0; first < x.pixels(); first += detail::kConvChunk) {
    const Eigen::Index count = std::min(detail::kConvChunk, x.pixels() - first);
    const auto g = grad_out.data.middleCols(first, count);
    if (grad_weight) {
      detail::im2col3x3(x, first, count, col);
      grad_weight->noalias() += g * col.transpose();
    }
    dcol.noalias() = weight.transpose() * g;
    detail::col2im3x3_add(dcol, first, dx);
  }
  if (grad_bias) *grad_bias += grad_out.data.rowwise().sum();
  return dx;
}

template <typename Scalar>
Scalar leaky_relu(Scalar x, Scalar slope) {
  return x >= Scalar(0) ? x : slope * x;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

enum class Activation { none, leaky_relu, relu, sigmoid };

// ---------------------------------------------------------------------------

template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels)
      : weight_(name + ".weight", out_channels, 9 * in_channels), bias_(name + ".bias", out_channels, 1) {}

  /// He-uniform initialisation for a leaky-rectifier of slope 0.2.
  void init(std::mt19937_64& rng) {
    const double fan_in = static_cast<double>(weight_.value.cols());
    const double bound = std::sqrt(6.0 / ((1.0 + 0.04) * fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i) weight_.value.data()[i] = static_cast<Scalar>(dist(rng));
    bias_.value.setZero();
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    input_ = x;
    return conv3x3<Scalar>(weight_.value, bias_.value.col(0), x);
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) {
    return conv3x3_backward<Scalar>(weight_.value, input_, grad_out, &weight_.grad, &bias_.grad);
  }

  void collect(ParamList<Scalar>& out) {
    out.params.push_back(&weight_);
    out.params.push_back(&bias_);
  }

  Param<Scalar>& weight() { return weight_; }
  Param<Scalar>& bias() { return bias_; }
  int in_channels() const { return static_cast<int>(weight_.value.cols() / 9); }
  int out_channels() const { return static_cast<int>(weight_.value.rows()); }

 private:
  Param<Scalar> weight_;
  Param<Scalar> bias_;
  Tensor<Scalar> input_;
};

/// Per-channel batch normalisation over all pixels of the batch.
template <typename Scalar>
class BatchNorm {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm() = default;
  BatchNorm(std::string name, int channels)
      : name_(std::move(name)),
        gamma_(name_ + ".gamma", channels, 1),
        beta_(name_ + ".beta", channels, 1),
        running_mean_(Matrix<Scalar>::Zero(channels, 1)),
        running_var_(Matrix<Scalar>::Ones(channels, 1)) {
    gamma_.value.setOnes();
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) {
    mode_ = mode;
    const Eigen::Index count = x.pixels();
    Tensor<Scalar> out = Tensor<Scalar>::zeros_like(x);
    if (mode == Mode::train) {
      const Vector<Scalar> mean = x.data.rowwise().mean();
      Matrix<Scalar> centered = x.data.colwise() - mean;
      const Vector<Scalar> var = centered.array().square().rowwise().mean().matrix();
      inv_std_ = (var.array() + Scalar(kEps)).rsqrt().matrix();
      normalized_ = inv_std_.asDiagonal() * centered;
      const Scalar unbias = count > 1 ? Scalar(count) / Scalar(count - 1) : Scalar(1);
      running_mean_.col(0) = (Scalar(1) - Scalar(kMomentum)) * running_mean_.col(0) + Scalar(kMomentum) * mean;
      running_var_.col(0) =
          (Scalar(1) - Scalar(kMomentum)) * running_var_.col(0) + Scalar(kMomentum) * unbias * var;
    } else {
      inv_std_ = (running_var_.col(0).array() + Scalar(kEps)).rsqrt().matrix();
      normalized_ = inv_std_.asDiagonal() * (x.data.colwise() - running_mean_.col(0));
    }
    out.data = gamma_.value.col(0).asDiagonal() * normalized_;
    out.data.colwise() += beta_.value.col(0);
    return out;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) {
    const Matrix<Scalar>& g = grad_out.data;
    gamma_.grad.col(0) += (g.array() * normalized_.array()).rowwise().sum().matrix();
    beta_.grad.col(0) += g.rowwise().sum();
    Tensor<Scalar> dx = Tensor<Scalar>::zeros_like(grad_out);
    const Vector<Scalar> scale = (gamma_.value.col(0).array() * inv_std_.array()).matrix();
    if (mode_ == Mode::eval) {
      dx.data = scale.asDiagonal() * g;
      return dx;
    }
    const Vector<Scalar> mean_g = g.rowwise().mean();
    const Vector<Scalar> mean_gx = (g.array() * normalized_.array()).rowwise().mean().matrix();
    dx.data = g.colwise() - mean_g;
    dx.data -= mean_gx.asDiagonal() * normalized_;
    dx.data = scale.asDiagonal() * dx.data;
    return dx;
  }

  void collect(ParamList<Scalar>& out) {
    out.params.push_back(&gamma_);
    out.params.push_back(&beta_);
    out.buffers.push_back({name_ + ".running_mean", &running_mean_});
    out.buffers.push_back({name_ + ".running_var", &running_var_});
  }

  Param<Scalar>& gamma() { return gamma_; }
  Param<Scalar>& beta() { return beta_; }

 private:
  std::string name_;
  Param<Scalar> gamma_;
  Param<Scalar> beta_;
  Matrix<Scalar> running_mean_;
  Matrix<Scalar> running_var_;
  Mode mode_ = Mode::train;
  Vector<Scalar> inv_std_;
  Matrix<Scalar> normalized_;
};

/// Elementwise activation with cached state for the backward pass.
template <typename Scalar>
class ActivationLayer {
 public:
  static constexpr double kLeakySlope = 0.2;

  explicit ActivationLayer(Activation kind = Activation::none) : kind_(kind) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    Tensor<Scalar> out = x;
    switch (kind_) {
      case Activation::none:
        break;
      case Activation::leaky_relu:
        cache_ = x.data;
        out.data = x.data.unaryExpr([](Scalar v) { return leaky_relu(v, Scalar(kLeakySlope)); });
        break;
      case Activation::relu:
        cache_ = x.data;
        out.data = x.data.cwiseMax(Scalar(0));
        break;
      case Activation::sigmoid:
        out.data = x.data.unaryExpr([](Scalar v) { return sigmoid(v); });
        cache_ = out.data;
        break;
    }
    return out;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) const {
    Tensor<Scalar> dx = grad_out;
    switch (kind_) {
      case Activation::none:
        break;
      case Activation::leaky_relu:
        dx.data = dx.data.binaryExpr(cache_, [](Scalar g, Scalar v) { return v >= Scalar(0) ? g : g * Scalar(kLeakySlope); });
        break;
      case Activation::relu:
        dx.data = dx.data.binaryExpr(cache_, [](Scalar g, Scalar v) { return v > Scalar(0) ? g : Scalar(0); });
        break;
      case Activation::sigmoid:
        dx.data.array() *= cache_.array() * (Scalar(1) - cache_.array());
        break;
    }
    return dx;
  }

  Activation kind() const { return kind_; }

 private:
  Activation kind_;
  Matrix<Scalar> cache_;
};

/// 2x2 max pooling, stride 2; odd trailing rows/columns are dropped.
template <typename Scalar>
class MaxPool2 {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    if (x.h < 2 || x.w < 2) throw ShapeError("MaxPool2: input smaller than 2x2");
    in_n_ = x.n;
    in_c_ = x.c;
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor<Scalar> out(x.n, x.c, x.h / 2, x.w / 2);
    argmax_.resize(x.c, out.pixels());
    for (int img = 0; img < x.n; ++img)
      for (int y = 0; y < out.h; ++y)
        for (int xx = 0; xx < out.w; ++xx) {
          const Eigen::Index o = out.index(img, y, xx);
          for (int ch = 0; ch < x.c; ++ch) {
            Eigen::Index best = x.index(img, 2 * y, 2 * xx);
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const Eigen::Index q = x.index(img, 2 * y + dy, 2 * xx + dx);
                if (x.data(ch, q) > x.data(ch, best)) best = q;
              }
            argmax_(ch, o) = best;
            out.data(ch, o) = x.data(ch, best);
          }
        }
    return out;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) const {
    Tensor<Scalar> dx(in_n_, in_c_, in_h_, in_w_);
    for (Eigen::Index o = 0; o < grad_out.pixels(); ++o)
      for (int ch = 0; ch < in_c_; ++ch) dx.data(ch, argmax_(ch, o)) += grad_out.data(ch, o);
    return dx;
  }

 private:
  int in_n_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> argmax_;
};

/// Global average pooling: (n, c, h, w) -> c x n matrix.
template <typename Scalar>
Matrix<Scalar> global_average_pool(const Tensor<Scalar>& x) {
  Matrix<Scalar> out(x.c, x.n);
  for (int img = 0; img < x.n; ++img) out.col(img) = x.image(img).rowwise().mean();
  return out;
}

template <typename Scalar>
Tensor<Scalar> global_average_pool_backward(const Matrix<Scalar>& grad_out, int n, int c, int h, int w) {
  Tensor<Scalar> dx(n, c, h, w);
  const Scalar inv = Scalar(1) / Scalar(static_cast<double>(h) * w);
  for (int img = 0; img < n; ++img) dx.image(img).colwise() = grad_out.col(img) * inv;
  return dx;
}

template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features)
      : weight_(name + ".weight", out_features, in_features), bias_(name + ".bias", out_features, 1) {}

  void init(std::mt19937_64& rng, double scale = 1.0) {
    const double bound = scale / std::sqrt(static_cast<double>(weight_.value.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i) weight_.value.data()[i] = static_cast<Scalar>(dist(rng));
    bias_.value.setZero();
  }

  /// x is in_features x batch.
  Matrix<Scalar> forward(const Matrix<Scalar>& x) {
    input_ = x;
    Matrix<Scalar> out = weight_.value * x;
    out.colwise() += bias_.value.col(0);
    return out;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& grad_out) {
    weight_.grad.noalias() += grad_out * input_.transpose();
    bias_.grad.col(0) += grad_out.rowwise().sum();
    return weight_.value.transpose() * grad_out;
  }

  void collect(ParamList<Scalar>& out) {
    out.params.push_back(&weight_);
    out.params.push_back(&bias_);
  }

  Param<Scalar>& weight() { return weight_; }
  Param<Scalar>& bias() { return bias_; }

 private:
  Param<Scalar> weight_;
  Param<Scalar> bias_;
  Matrix<Scalar> input_;
};

/// conv3x3 -> optional batch norm -> activation.
template <typename Scalar>
class ConvUnit {
 public:
  ConvUnit(const std::string& name, int in_channels, int out_channels, bool batch_norm, Activation act)
      : conv_(name + ".conv", in_channels, out_channels), act_(act), has_bn_(batch_norm) {
    if (batch_norm) bn_ = BatchNorm<Scalar>(name + ".bn", out_channels);
  }

  void init(std::mt19937_64& rng) { conv_.init(rng); }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) {
    Tensor<Scalar> y = conv_.forward(x);
    if (has_bn_) y = bn_.forward(y, mode);
    return act_.forward(y);
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) {
    Tensor<Scalar> g = act_.backward(grad_out);
    if (has_bn_) g = bn_.backward(g);
    return conv_.backward(g);
  }

  void collect(ParamList<Scalar>& out) {
    conv_.collect(out);
    if (has_bn_) bn_.collect(out);
  }

  Conv2d<Scalar>& conv() { return conv_; }
  BatchNorm<Scalar>& bn() { return bn_; }
  bool has_batch_norm() const { return has_bn_; }

 private:
  Conv2d<Scalar> conv_;
  BatchNorm<Scalar> bn_;
  ActivationLayer<Scalar> act_;
  bool has_bn_;
};

}  // namespace uwe

#endif  // UWE_LAYERS_HPP
