#ifndef UWE_CONFIG_HPP
#define UWE_CONFIG_HPP

#include "uwe/data.hpp"
#include "uwe/losses.hpp"
#include "uwe/network.hpp"
#include "uwe/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace uwe {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 8;
  int epochs = 50;
  std::uint64_t seed = 0;
  int schedule_epoch = 20;
  int checkpoint_every = 10;  // epochs; 0 keeps only the final checkpoint
  long long max_steps = 0;    // 0: no limit

  int intervals = 16;
  int rgb_width = 64;
  int hsv_width = 64;
  int attention_width = 64;
  Variant variant = Variant::full;

  double w_l1 = 1.0;
  double w_ssim = 1.0;
  double w_hsv = 1.0;
  double w_perc = 0.5;

  std::string perceptual = "vgg19";  // vgg19 | random | identity | none
  std::string vgg_weights = "vgg19.bin";
  std::string vgg_layer = "conv4_3";

  int resize = 350;
  int crop = 320;

  std::string resume;  // checkpoint to continue from

  NetworkConfig network() const;
  AdamConfig adam() const;
  LossWeights loss_weights() const;
  TransformConfig transform() const;

  /// Throws ConfigError on out-of-range values.
  void validate() const;

  /// Flat `key = value` lines in a fixed key order; parse(to_text()) round-trips.
  std::string to_text() const;
  std::vector<std::pair<std::string, std::string>> entries() const;

  /// Starts from the defaults; `#` starts a comment; unknown keys are errors.
  static TrainConfig parse(const std::string& text, const std::string& source = "<config>");
  static TrainConfig load(const std::filesystem::path& path);

  /// Applies one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
};

}  // namespace uwe

#endif  // UWE_CONFIG_HPP
