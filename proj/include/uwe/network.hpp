#ifndef UWE_NETWORK_HPP
#define UWE_NETWORK_HPP

#include "uwe/colorspace.hpp"
#include "uwe/curves.hpp"
#include "uwe/layers.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace uwe {

/// Which blocks take part in the forward pass.
///   full          RGB block, HSV curve block and attention fusion
///   rgb_only      RGB block alone; its output is the enhanced image
///   no_attention  both branches, blended with equal weights
enum class Variant { full, rgb_only, no_attention };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::full:
      return "full";
    case Variant::rgb_only:
      return "rgb_only";
    case Variant::no_attention:
      return "no_attention";
  }
  return "full";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "rgb_only") return Variant::rgb_only;
  if (s == "no_attention") return Variant::no_attention;
  throw std::invalid_argument("unknown variant '" + s + "' (expected full, rgb_only or no_attention)");
}

struct NetworkConfig {
  int intervals = 16;  // knot intervals M per curve
  int rgb_width = 64;
  int hsv_width = 64;
  int attention_width = 64;
  Variant variant = Variant::full;

  int knot_count() const { return CurveSet<double>::kCurves * (intervals + 1); }
};

inline constexpr int kRgbLayers = 8;
inline constexpr int kAttentionLayers = 8;
inline constexpr int kHsvConvLayers = 5;
inline constexpr int kHsvPools = 4;
inline constexpr int kMinHsvInput = 1 << kHsvPools;

/// Eight 3x3 conv + batch-norm layers; leaky rectifier on the first seven and
/// a logistic squash on the last. Used for both the RGB block and the
/// attention block.
template <typename Scalar>
class PlainConvStack {
 public:
  PlainConvStack(const std::string& name, int in_channels, int width, int out_channels, int layers) {
    units_.reserve(layers);
    for (int i = 0; i < layers; ++i) {
      const int cin = i == 0 ? in_channels : width;
      const int cout = i == layers - 1 ? out_channels : width;
      const Activation act = i == layers - 1 ? Activation::sigmoid : Activation::leaky_relu;
      units_.emplace_back(name + "." + std::to_string(i + 1), cin, cout, true, act);
    }
  }

  void init(std::mt19937_64& rng) {
    for (auto& u : units_) u.init(rng);
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) {
    if (x.h < 1 || x.w < 1 || x.n < 1) throw ShapeError("conv stack: input has zero spatial dims");
    Tensor<Scalar> y = x;
    for (auto& u : units_) y = u.forward(y, mode);
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) {
    Tensor<Scalar> g = grad_out;
    for (auto it = units_.rbegin(); it != units_.rend(); ++it) g = it->backward(g);
    return g;
  }

  void collect(ParamList<Scalar>& out) {
    for (auto& u : units_) u.collect(out);
  }

  std::vector<ConvUnit<Scalar>>& units() { return units_; }

 private:
  std::vector<ConvUnit<Scalar>> units_;
};

/// Five conv layers with 2x2 max pooling after the first four, global
/// average pooling and a fully connected head that regresses the knots of the
/// four adjustment curves, which are then applied to the input HSV image.
template <typename Scalar>
class HsvBlock {
 public:
  /// Head weights start this much smaller than the default linear init so the
  /// curves begin near unity.
  static constexpr double kHeadInitScale = 0.01;

  HsvBlock(int width, int intervals) : head_("hsv.head", width, CurveSet<Scalar>::kCurves * (intervals + 1)) {
    units_.reserve(kHsvConvLayers);
    for (int i = 0; i < kHsvConvLayers; ++i) {
      units_.emplace_back("hsv." + std::to_string(i + 1), i == 0 ? 3 : width, width, false, Activation::leaky_relu);
    }
    pools_.resize(kHsvPools);
  }

  void init(std::mt19937_64& rng) {
    for (auto& u : units_) u.init(rng);
    head_.init(rng, kHeadInitScale);
    head_.bias().value.setOnes();
  }

  struct Output {
    Tensor<Scalar> adjusted;
    Matrix<Scalar> knots;  // 4(M+1) x batch
  };

  Output forward(const Tensor<Scalar>& hsv, Mode mode) {
    if (hsv.h < kMinHsvInput || hsv.w < kMinHsvInput) {
      throw ShapeError("HSV block: input " + std::to_string(hsv.h) + "x" + std::to_string(hsv.w) +
                       " is smaller than the " + std::to_string(kMinHsvInput) + "x" + std::to_string(kMinHsvInput) +
                       " needed by four 2x2 poolings");
    }
    input_ = hsv;
    Tensor<Scalar> x = hsv;
    for (int i = 0; i < kHsvConvLayers; ++i) {
      x = units_[i].forward(x, mode);
      if (i < kHsvPools) x = pools_[i].forward(x);
    }
    feature_n_ = x.n;
    feature_c_ = x.c;
    feature_h_ = x.h;
    feature_w_ = x.w;
    knots_ = head_.forward(global_average_pool(x));
    return Output{apply_curves(hsv, knots_), knots_};
  }

  /// Returns dL/d(input hsv), through both the curve application and the
  /// knot regression path.
  Tensor<Scalar> backward(const Tensor<Scalar>& grad_adjusted) {
    CurveGrads<Scalar> cg = apply_curves_backward(input_, knots_, grad_adjusted);
    Matrix<Scalar> g_feat = head_.backward(cg.knots);
    Tensor<Scalar> g = global_average_pool_backward(g_feat, feature_n_, feature_c_, feature_h_, feature_w_);
    for (int i = kHsvConvLayers - 1; i >= 0; --i) {
      if (i < kHsvPools) g = pools_[i].backward(g);
      g = units_[i].backward(g);
    }
    cg.hsv.data += g.data;
    return cg.hsv;
  }

  void collect(ParamList<Scalar>& out) {
    for (auto& u : units_) u.collect(out);
    head_.collect(out);
  }

  Linear<Scalar>& head() { return head_; }
  std::array<int, 2> feature_dims() const { return {feature_h_, feature_w_}; }

 private:
  std::vector<ConvUnit<Scalar>> units_;
  std::vector<MaxPool2<Scalar>> pools_;
  Linear<Scalar> head_;
  Tensor<Scalar> input_;
  Matrix<Scalar> knots_;
  int feature_n_ = 0, feature_c_ = 0, feature_h_ = 0, feature_w_ = 0;
};

/// enhanced = clamp(A[0:3] * rgb + A[3:6] * hsv_rgb, 0, 1).
template <typename Scalar>
Tensor<Scalar> attention_fuse(const Tensor<Scalar>& attention, const Tensor<Scalar>& rgb_out,
                              const Tensor<Scalar>& hsv_out_rgb) {
  require_same_shape(rgb_out, hsv_out_rgb, "attention_fuse");
  if (attention.c != 6 || attention.n != rgb_out.n || attention.h != rgb_out.h || attention.w != rgb_out.w) {
    throw ShapeError("attention_fuse: attention map must be " + shape_string(rgb_out.n, 6, rgb_out.h, rgb_out.w));
  }
  Tensor<Scalar> out = Tensor<Scalar>::zeros_like(rgb_out);
  out.data = (attention.data.topRows(3).array() * rgb_out.data.array() +
              attention.data.bottomRows(3).array() * hsv_out_rgb.data.array())
                 .cwiseMax(Scalar(0))
                 .cwiseMin(Scalar(1))
                 .matrix();
  return out;
}

template <typename Scalar>
struct ModelOutput {
  Tensor<Scalar> enhanced;
  Tensor<Scalar> rgb_branch;
  Tensor<Scalar> hsv_input;      // rgb_to_hsv(rgb_branch)
  Tensor<Scalar> hsv_adjusted;   // after the curves
  Tensor<Scalar> hsv_branch_rgb;  // hsv_to_rgb(hsv_adjusted)
  Tensor<Scalar> attention;      // 6 channels, empty unless the variant is full
  Matrix<Scalar> knots;          // 4(M+1) x batch, empty for rgb_only

  CurveSet<Scalar> curves(int img) const { return CurveSet<Scalar>::from_flat(knots.col(img)); }
};

/// The complete two-colour-space enhancement network.
///
/// A model instance owns per-layer caches from its last forward pass, so a
/// backward call always refers to the most recent forward. Not safe for
/// concurrent use.
template <typename Scalar>
class Model {
 public:
  explicit Model(const NetworkConfig& cfg) : cfg_(cfg), rgb_("rgb", 3, cfg.rgb_width, 3, kRgbLayers) {
    if (cfg.intervals < 1) throw std::invalid_argument("NetworkConfig: intervals must be >= 1");
    if (cfg.variant != Variant::rgb_only) hsv_ = std::make_unique<HsvBlock<Scalar>>(cfg.hsv_width, cfg.intervals);
    if (cfg.variant == Variant::full) {
      attention_ = std::make_unique<PlainConvStack<Scalar>>("attention", 9, cfg.attention_width, 6, kAttentionLayers);
    }
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    rgb_.init(rng);
    if (hsv_) hsv_->init(rng);
    if (attention_) attention_->init(rng);
  }

  const NetworkConfig& config() const { return cfg_; }

  /// Replaces the learned attention map with constant branch weights.
  void set_attention_override(std::optional<std::array<Scalar, 2>> weights) { attention_override_ = weights; }

  Tensor<Scalar> rgb_block_forward(const Tensor<Scalar>& raw, Mode mode) { return rgb_.forward(raw, mode); }

  typename HsvBlock<Scalar>::Output hsv_block_forward(const Tensor<Scalar>& hsv, Mode mode) {
    if (!hsv_) throw std::logic_error("model has no HSV block (variant rgb_only)");
    return hsv_->forward(hsv, mode);
  }

  ModelOutput<Scalar> forward(const Tensor<Scalar>& raw, Mode mode) {
    if (raw.c != 3) throw ShapeError("model: expected a 3-channel RGB input");
    require_unit_range(raw, "model input");
    ModelOutput<Scalar> out;
    out.rgb_branch = rgb_.forward(raw, mode);
    if (cfg_.variant == Variant::rgb_only) {
      out.enhanced = out.rgb_branch;
      cache_ = out;
      return out;
    }
    out.hsv_input = rgb_to_hsv(out.rgb_branch);
    auto hsv_out = hsv_->forward(out.hsv_input, mode);
    out.hsv_adjusted = std::move(hsv_out.adjusted);
    out.knots = std::move(hsv_out.knots);
    out.hsv_branch_rgb = hsv_to_rgb(out.hsv_adjusted);

    if (cfg_.variant == Variant::no_attention) {
      out.attention = Tensor<Scalar>::constant(raw.n, 6, raw.h, raw.w, Scalar(0.5));
    } else if (attention_override_) {
      out.attention = Tensor<Scalar>(raw.n, 6, raw.h, raw.w);
      out.attention.data.topRows(3).setConstant((*attention_override_)[0]);
      out.attention.data.bottomRows(3).setConstant((*attention_override_)[1]);
    } else {
      out.attention = attention_->forward(concat_channels(raw, out.rgb_branch, out.hsv_branch_rgb), mode);
    }
    out.enhanced = attention_fuse(out.attention, out.rgb_branch, out.hsv_branch_rgb);
    cache_ = out;
    return out;
  }

  /// Back-propagates loss gradients on the enhanced output and on the RGB
  /// branch output (the pixel-level loss site) into the parameter gradients.
  void backward(const Tensor<Scalar>& grad_enhanced, const Tensor<Scalar>* grad_rgb_branch = nullptr) {
    const ModelOutput<Scalar>& c = cache_;
    require_same_shape(c.enhanced, grad_enhanced, "model backward");
    Tensor<Scalar> g_rgb = Tensor<Scalar>::zeros_like(c.rgb_branch);
    if (grad_rgb_branch) g_rgb.data += grad_rgb_branch->data;

    if (cfg_.variant == Variant::rgb_only) {
      g_rgb.data += grad_enhanced.data;
      rgb_.backward(g_rgb);
      return;
    }

    const auto& att = c.attention;
    const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> pre =
        att.data.topRows(3).array() * c.rgb_branch.data.array() +
        att.data.bottomRows(3).array() * c.hsv_branch_rgb.data.array();
    const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> g_pre =
        grad_enhanced.data.array() * (pre >= Scalar(0) && pre <= Scalar(1)).template cast<Scalar>();

    g_rgb.data.array() += g_pre * att.data.topRows(3).array();
    Tensor<Scalar> g_hsv_rgb = Tensor<Scalar>::zeros_like(c.hsv_branch_rgb);
    g_hsv_rgb.data = (g_pre * att.data.bottomRows(3).array()).matrix();

    if (cfg_.variant == Variant::full && !attention_override_) {
      Tensor<Scalar> g_att(att.n, 6, att.h, att.w);
      g_att.data.topRows(3) = (g_pre * c.rgb_branch.data.array()).matrix();
      g_att.data.bottomRows(3) = (g_pre * c.hsv_branch_rgb.data.array()).matrix();
      Tensor<Scalar> g_in = attention_->backward(g_att);
      g_rgb.data += g_in.data.middleRows(3, 3);
      g_hsv_rgb.data += g_in.data.bottomRows(3);
    }

    Tensor<Scalar> g_hsv_adj = hsv_to_rgb_backward(c.hsv_adjusted, g_hsv_rgb);
    Tensor<Scalar> g_hsv_in = hsv_->backward(g_hsv_adj);
    g_rgb.data += rgb_to_hsv_backward(c.rgb_branch, g_hsv_in).data;
    rgb_.backward(g_rgb);
  }

  ParamList<Scalar> parameters() {
    ParamList<Scalar> list;
    rgb_.collect(list);
    if (hsv_) hsv_->collect(list);
    if (attention_) attention_->collect(list);
    return list;
  }

  Eigen::Index parameter_count() { return parameters().count(); }

  void zero_grad() {
    for (auto* p : parameters().params) p->zero_grad();
  }

  PlainConvStack<Scalar>& rgb_block() { return rgb_; }
  HsvBlock<Scalar>* hsv_block() { return hsv_.get(); }
  PlainConvStack<Scalar>* attention_block() { return attention_.get(); }

 private:
  NetworkConfig cfg_;
  PlainConvStack<Scalar> rgb_;
  std::unique_ptr<HsvBlock<Scalar>> hsv_;
  std::unique_ptr<PlainConvStack<Scalar>> attention_;
  std::optional<std::array<Scalar, 2>> attention_override_;
  ModelOutput<Scalar> cache_;
};

/// Parameter count of a plain 20-layer 3x3 convolutional network of the given
/// width with per-layer batch norm (3 -> width -> ... -> width -> 3), used as
/// the deep-CNN size reference.
inline long long deep_baseline_parameter_count(int width = 64, int layers = 20) {
  long long total = 0;
  for (int i = 0; i < layers; ++i) {
    const long long cin = i == 0 ? 3 : width;
    const long long cout = i == layers - 1 ? 3 : width;
    total += cout * cin * 9 + cout + 2 * cout;
  }
  return total;
}

}  // namespace uwe

#endif  // UWE_NETWORK_HPP
