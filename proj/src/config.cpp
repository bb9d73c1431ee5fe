#include "uwe/config.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace uwe {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

NetworkConfig TrainConfig::network() const {
  NetworkConfig n;
  n.intervals = intervals;
  n.rgb_width = rgb_width;
  n.hsv_width = hsv_width;
  n.attention_width = attention_width;
  n.variant = variant;
  return n;
}

AdamConfig TrainConfig::adam() const { return {lr, beta1, beta2, adam_eps}; }

LossWeights TrainConfig::loss_weights() const {
  LossWeights w;
  w.w_l1 = w_l1;
  w.w_ssim = w_ssim;
  w.w_hsv = w_hsv;
  w.w_perc = w_perc;
  w.schedule_epoch = schedule_epoch;
  return w;
}

TransformConfig TrainConfig::transform() const { return {resize, crop}; }

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(lr > 0, "lr must be positive");
  need(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "Adam betas must lie in [0, 1)");
  need(adam_eps > 0, "adam_eps must be positive");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(epochs >= 1, "epochs must be >= 1");
  need(schedule_epoch >= 0, "schedule_epoch must be >= 0");
  need(checkpoint_every >= 0, "checkpoint_every must be >= 0");
  need(max_steps >= 0, "max_steps must be >= 0");
  need(intervals >= 1, "intervals must be >= 1");
  need(rgb_width >= 1 && hsv_width >= 1 && attention_width >= 1, "block widths must be >= 1");
  need(resize >= kMinHsvInput && crop >= kMinHsvInput, "resize and crop must be at least 16");
  need(crop <= resize, "crop must not exceed resize");
  need(w_l1 >= 0 && w_ssim >= 0 && w_hsv >= 0 && w_perc >= 0, "loss weights must be non-negative");
  static const std::set<std::string> extractors{"vgg19", "random", "identity", "none"};
  need(extractors.count(perceptual) == 1, "perceptual must be one of vgg19, random, identity, none");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
  return {
      {"lr", format_double(lr)},
      {"beta1", format_double(beta1)},
      {"beta2", format_double(beta2)},
      {"adam_eps", format_double(adam_eps)},
      {"batch_size", std::to_string(batch_size)},
      {"epochs", std::to_string(epochs)},
      {"seed", std::to_string(seed)},
      {"schedule_epoch", std::to_string(schedule_epoch)},
      {"checkpoint_every", std::to_string(checkpoint_every)},
      {"max_steps", std::to_string(max_steps)},
      {"intervals", std::to_string(intervals)},
      {"rgb_width", std::to_string(rgb_width)},
      {"hsv_width", std::to_string(hsv_width)},
      {"attention_width", std::to_string(attention_width)},
      {"variant", to_string(variant)},
      {"w_l1", format_double(w_l1)},
      {"w_ssim", format_double(w_ssim)},
      {"w_hsv", format_double(w_hsv)},
      {"w_perc", format_double(w_perc)},
      {"perceptual", perceptual},
      {"vgg_weights", vgg_weights},
      {"vgg_layer", vgg_layer},
      {"resize", std::to_string(resize)},
      {"crop", std::to_string(crop)},
      {"resume", resume},
  };
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries()) os << k << " = " << v << '\n';
  return os.str();
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "lr") lr = parse_number<double>(key, value);
  else if (key == "beta1") beta1 = parse_number<double>(key, value);
  else if (key == "beta2") beta2 = parse_number<double>(key, value);
  else if (key == "adam_eps") adam_eps = parse_number<double>(key, value);
  else if (key == "batch_size") batch_size = parse_number<int>(key, value);
  else if (key == "epochs") epochs = parse_number<int>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "schedule_epoch") schedule_epoch = parse_number<int>(key, value);
  else if (key == "checkpoint_every") checkpoint_every = parse_number<int>(key, value);
  else if (key == "max_steps") max_steps = parse_number<long long>(key, value);
  else if (key == "intervals") intervals = parse_number<int>(key, value);
  else if (key == "rgb_width") rgb_width = parse_number<int>(key, value);
  else if (key == "hsv_width") hsv_width = parse_number<int>(key, value);
  else if (key == "attention_width") attention_width = parse_number<int>(key, value);
  else if (key == "variant") {
    try {
      variant = parse_variant(value);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config key 'variant': ") + e.what());
    }
  }
  else if (key == "w_l1") w_l1 = parse_number<double>(key, value);
  else if (key == "w_ssim") w_ssim = parse_number<double>(key, value);
  else if (key == "w_hsv") w_hsv = parse_number<double>(key, value);
  else if (key == "w_perc") w_perc = parse_number<double>(key, value);
  else if (key == "perceptual") perceptual = value;
  else if (key == "vgg_weights") vgg_weights = value;
  else if (key == "vgg_layer") vgg_layer = value;
  else if (key == "resize") resize = parse_number<int>(key, value);
  else if (key == "crop") crop = parse_number<int>(key, value);
  else if (key == "resume") resume = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig TrainConfig::parse(const std::string& text, const std::string& source) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      cfg.set(key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

}  // namespace uwe
