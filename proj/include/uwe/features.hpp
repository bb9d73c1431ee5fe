#ifndef UWE_FEATURES_HPP
#define UWE_FEATURES_HPP

#include "uwe/layers.hpp"
#include "uwe/tensor.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace uwe {

/// A frozen feature map used by the perceptual loss.
template <typename Scalar>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;

  virtual std::string name() const = 0;
  virtual bool available() const { return true; }
  virtual Tensor<Scalar> features(const Tensor<Scalar>& rgb) const = 0;
  /// dL/d(rgb) given dL/d(features) at `rgb`.
  virtual Tensor<Scalar> features_backward(const Tensor<Scalar>& rgb, const Tensor<Scalar>& grad_features) const = 0;
};

template <typename Scalar>
class IdentityExtractor final : public FeatureExtractor<Scalar> {
 public:
  std::string name() const override { return "identity"; }
  Tensor<Scalar> features(const Tensor<Scalar>& rgb) const override { return rgb; }
  Tensor<Scalar> features_backward(const Tensor<Scalar>&, const Tensor<Scalar>& g) const override { return g; }
};

/// Stand-in used when the configured extractor could not be loaded; the
/// perceptual term then contributes zero.
template <typename Scalar>
class UnavailableExtractor final : public FeatureExtractor<Scalar> {
 public:
  explicit UnavailableExtractor(std::string reason) : reason_(std::move(reason)) {}
  std::string name() const override { return "unavailable (" + reason_ + ")"; }
  bool available() const override { return false; }
  Tensor<Scalar> features(const Tensor<Scalar>& rgb) const override { return Tensor<Scalar>(rgb.n, 0, rgb.h, rgb.w); }
  Tensor<Scalar> features_backward(const Tensor<Scalar>& rgb, const Tensor<Scalar>&) const override {
    return Tensor<Scalar>::zeros_like(rgb);
  }

 private:
  std::string reason_;
};

/// Sequence of frozen 3x3 conv + ReLU stages with optional 2x2 max pools and an
/// optional per-channel input normalisation.
template <typename Scalar>
class ConvFeatureStack final : public FeatureExtractor<Scalar> {
 public:
  struct Stage {
    Matrix<Scalar> weight;  // cout x 9 cin
    Vector<Scalar> bias;
    bool relu = true;
    bool pool_before = false;
  };

  ConvFeatureStack(std::string name, std::vector<Stage> stages) : name_(std::move(name)), stages_(std::move(stages)) {}

  void set_input_normalization(const std::array<double, 3>& mean, const std::array<double, 3>& stddev) {
    mean_ = mean;
    std_ = stddev;
  }

  std::string name() const override { return name_; }

  Tensor<Scalar> features(const Tensor<Scalar>& rgb) const override {
    Tensor<Scalar> x = normalize(rgb);
    for (const auto& st : stages_) {
      if (st.pool_before) {
        MaxPool2<Scalar> pool;
        x = pool.forward(x);
      }
      x = conv3x3<Scalar>(st.weight, st.bias, x);
      if (st.relu) x.data = x.data.cwiseMax(Scalar(0));
    }
    return x;
  }

  Tensor<Scalar> features_backward(const Tensor<Scalar>& rgb, const Tensor<Scalar>& grad_features) const override {
    // Re-run the forward pass keeping every stage input.
    std::vector<Tensor<Scalar>> conv_inputs;
    std::vector<Tensor<Scalar>> conv_outputs;
    std::vector<MaxPool2<Scalar>> pools(stages_.size());
    Tensor<Scalar> x = normalize(rgb);
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const auto& st = stages_[i];
      if (st.pool_before) x = pools[i].forward(x);
      conv_inputs.push_back(x);
      x = conv3x3<Scalar>(st.weight, st.bias, x);
      conv_outputs.push_back(x);
      if (st.relu) x.data = x.data.cwiseMax(Scalar(0));
    }
    Tensor<Scalar> g = grad_features;
    for (std::size_t k = stages_.size(); k-- > 0;) {
      const auto& st = stages_[k];
      if (st.relu) g.data.array() *= (conv_outputs[k].data.array() > Scalar(0)).template cast<Scalar>();
      g = conv3x3_backward<Scalar>(st.weight, conv_inputs[k], g, nullptr, nullptr);
      if (st.pool_before) g = pools[k].backward(g);
    }
    for (int ch = 0; ch < 3; ++ch) g.data.row(ch) /= Scalar(std_[ch]);
    return g;
  }

  const std::vector<Stage>& stages() const { return stages_; }

 private:
  Tensor<Scalar> normalize(const Tensor<Scalar>& rgb) const {
    if (rgb.c != 3) throw ShapeError("feature extractor: expected 3 channels");
    Tensor<Scalar> x = rgb;
    for (int ch = 0; ch < 3; ++ch) {
      x.data.row(ch) = (x.data.row(ch).array() - Scalar(mean_[ch])) / Scalar(std_[ch]);
    }
    return x;
  }

  std::string name_;
  std::vector<Stage> stages_;
  std::array<double, 3> mean_{0.0, 0.0, 0.0};
  std::array<double, 3> std_{1.0, 1.0, 1.0};
};

/// Fixed-seed random convolutional extractor (ReLU after every stage).
template <typename Scalar>
std::unique_ptr<ConvFeatureStack<Scalar>> make_random_extractor(std::uint64_t seed, std::vector<int> widths = {8, 8}) {
  std::mt19937_64 rng(seed);
  std::vector<typename ConvFeatureStack<Scalar>::Stage> stages;
  int cin = 3;
  for (int cout : widths) {
    typename ConvFeatureStack<Scalar>::Stage st;
    const double bound = std::sqrt(6.0 / (9.0 * cin));
    std::uniform_real_distribution<double> dist(-bound, bound);
    st.weight.resize(cout, 9 * cin);
    for (Eigen::Index i = 0; i < st.weight.size(); ++i) st.weight.data()[i] = static_cast<Scalar>(dist(rng));
    st.bias = Vector<Scalar>::Constant(cout, Scalar(0.05));
    stages.push_back(std::move(st));
    cin = cout;
  }
  return std::make_unique<ConvFeatureStack<Scalar>>("random(seed=" + std::to_string(seed) + ")", std::move(stages));
}

/// 3x3 conv layers of the VGG-19 trunk, in order, with a flag for a 2x2 max
/// pool preceding the layer.
struct VggLayerSpec {
  const char* name;
  int in;
  int out;
  bool pool_before;
};

inline constexpr std::array<VggLayerSpec, 16> kVgg19Convs{{
    {"conv1_1", 3, 64, false},    {"conv1_2", 64, 64, false},   {"conv2_1", 64, 128, true},
    {"conv2_2", 128, 128, false}, {"conv3_1", 128, 256, true},  {"conv3_2", 256, 256, false},
    {"conv3_3", 256, 256, false}, {"conv3_4", 256, 256, false}, {"conv4_1", 256, 512, true},
    {"conv4_2", 512, 512, false}, {"conv4_3", 512, 512, false}, {"conv4_4", 512, 512, false},
    {"conv5_1", 512, 512, true},  {"conv5_2", 512, 512, false}, {"conv5_3", 512, 512, false},
    {"conv5_4", 512, 512, false},
}};

inline constexpr char kVggMagic[8] = {'U', 'W', 'E', 'V', 'G', 'G', '1', '9'};

/// Loads VGG-19 conv weights up to and including `last_layer` (default
/// conv4_3, features taken after its ReLU).
///
/// File layout (little-endian): 8-byte magic "UWEVGG19", uint32 layer count L,
/// then for each of the first L conv layers: uint32 out, uint32 in,
/// float32 weight[out][in][3][3], float32 bias[out]. Missing or malformed files
/// yield an UnavailableExtractor.
template <typename Scalar>
std::unique_ptr<FeatureExtractor<Scalar>> load_vgg19_extractor(const std::string& path,
                                                                const std::string& last_layer = "conv4_3") {
  std::size_t depth = 0;
  while (depth < kVgg19Convs.size() && last_layer != kVgg19Convs[depth].name) ++depth;
  if (depth == kVgg19Convs.size()) {
    return std::make_unique<UnavailableExtractor<Scalar>>("unknown VGG layer " + last_layer);
  }
  ++depth;
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::make_unique<UnavailableExtractor<Scalar>>("cannot open " + path);
  char magic[8];
  std::uint32_t count = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || std::memcmp(magic, kVggMagic, 8) != 0) {
    return std::make_unique<UnavailableExtractor<Scalar>>("bad VGG weight file header in " + path);
  }
  if (count < depth) return std::make_unique<UnavailableExtractor<Scalar>>("VGG weight file too short for " + last_layer);

  std::vector<typename ConvFeatureStack<Scalar>::Stage> stages;
  std::vector<float> buf;
  for (std::size_t l = 0; l < depth; ++l) {
    std::uint32_t out = 0, cin = 0;
    in.read(reinterpret_cast<char*>(&out), sizeof(out));
    in.read(reinterpret_cast<char*>(&cin), sizeof(cin));
    const auto& spec = kVgg19Convs[l];
    if (!in || out != static_cast<std::uint32_t>(spec.out) || cin != static_cast<std::uint32_t>(spec.in)) {
      return std::make_unique<UnavailableExtractor<Scalar>>(std::string("shape mismatch at ") + spec.name);
    }
    buf.resize(static_cast<std::size_t>(out) * cin * 9 + out);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) return std::make_unique<UnavailableExtractor<Scalar>>(std::string("truncated at ") + spec.name);
    typename ConvFeatureStack<Scalar>::Stage st;
    st.weight.resize(out, 9 * cin);
    for (std::uint32_t o = 0; o < out; ++o)
      for (std::uint32_t c = 0; c < cin; ++c)
        for (int k = 0; k < 9; ++k) {
          st.weight(o, k * cin + c) = static_cast<Scalar>(buf[(static_cast<std::size_t>(o) * cin + c) * 9 + k]);
        }
    st.bias.resize(out);
    for (std::uint32_t o = 0; o < out; ++o) st.bias[o] = static_cast<Scalar>(buf[static_cast<std::size_t>(out) * cin * 9 + o]);
    st.pool_before = spec.pool_before;
    stages.push_back(std::move(st));
  }
  auto stack = std::make_unique<ConvFeatureStack<Scalar>>("vgg19:" + last_layer, std::move(stages));
  stack->set_input_normalization({0.485, 0.456, 0.406}, {0.229, 0.224, 0.225});
  return stack;
}

}  // namespace uwe

#endif  // UWE_FEATURES_HPP
