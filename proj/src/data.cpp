#include "uwe/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace uwe {

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "' (expected train or test)");
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

PairedSample PairedDataset::load(std::size_t i) const {
  const PairEntry& e = entries.at(i);
  PairedSample s{read_image(e.raw), read_image(e.reference), e.id};
  return s;
}

PairedDataset load_pairs(const std::filesystem::path& root, Split split, std::uint64_t seed) {
  std::filesystem::path base = root;
  const std::string split_name = split == Split::train ? "train" : "test";
  if (std::filesystem::is_directory(root / split_name / "raw")) base = root / split_name;
  const auto raw_dir = base / "raw";
  const auto ref_dir = base / "reference";
  if (!std::filesystem::is_directory(raw_dir) || !std::filesystem::is_directory(ref_dir)) {
    throw std::runtime_error(base.string() + " must contain raw/ and reference/ directories");
  }

  std::map<std::string, std::filesystem::path> refs;
  for (const auto& p : list_images(ref_dir)) refs.emplace(p.stem().string(), p);

  PairedDataset ds;
  std::map<std::string, bool> used;
  for (const auto& p : list_images(raw_dir)) {
    const std::string id = p.stem().string();
    auto it = refs.find(id);
    if (it == refs.end()) {
      ds.warnings.push_back("no reference for raw image " + p.filename().string() + "; skipped");
      continue;
    }
    used[id] = true;
    ds.entries.push_back({id, p, it->second});
  }
  for (const auto& [id, path] : refs) {
    if (!used.count(id)) ds.warnings.push_back("no raw image for reference " + path.filename().string() + "; skipped");
  }
  for (const auto& w : ds.warnings) std::cerr << "warning: " << w << '\n';
  if (ds.entries.empty()) throw std::runtime_error("no image pairs found under " + base.string());

  std::sort(ds.entries.begin(), ds.entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  if (split == Split::train) seeded_shuffle(ds.entries, seed);
  return ds;
}

// Geometry ----------------------------------------------------------------------

Image resize_bilinear(const Image& img, int height, int width) {
  if (height < 1 || width < 1) throw ShapeError("resize_bilinear: target size must be positive");
  Image out(img.n, img.c, height, width);
  const double sy = static_cast<double>(img.h) / height;
  const double sx = static_cast<double>(img.w) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.w - 1);
      const double wx = fx - x0;
      for (int i = 0; i < img.n; ++i) {
        out.data.col(out.index(i, y, x)) =
            (1 - wy) * ((1 - wx) * img.data.col(img.index(i, y0, x0)) + wx * img.data.col(img.index(i, y0, x1))) +
            wy * ((1 - wx) * img.data.col(img.index(i, y1, x0)) + wx * img.data.col(img.index(i, y1, x1)));
      }
    }
  }
  return out;
}

Image crop(const Image& img, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || top + height > img.h || left + width > img.w || height < 1 || width < 1) {
    throw ShapeError("crop: window outside the image");
  }
  Image out(img.n, img.c, height, width);
  for (int i = 0; i < img.n; ++i)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.data.col(out.index(i, y, x)) = img.data.col(img.index(i, top + y, left + x));
  return out;
}

PairedSample train_transform(const PairedSample& s, std::uint64_t seed, const TransformConfig& cfg) {
  if (cfg.crop > cfg.resize) throw std::invalid_argument("train_transform: crop larger than resize");
  const Image raw = resize_bilinear(s.raw, cfg.resize, cfg.resize);
  const Image ref = resize_bilinear(s.reference, cfg.resize, cfg.resize);
  std::uint64_t state = seed;
  const auto span = static_cast<std::uint64_t>(cfg.resize - cfg.crop + 1);
  const int top = static_cast<int>(splitmix64(state) % span);
  const int left = static_cast<int>(splitmix64(state) % span);
  return {crop(raw, top, left, cfg.crop, cfg.crop), crop(ref, top, left, cfg.crop, cfg.crop), s.id};
}

// Degradation -------------------------------------------------------------------

double depth_at(int y, int x, int height, int width, std::uint64_t seed) {
  std::uint64_t state = seed;
  const int axis = static_cast<int>(splitmix64(state) % 4);
  double t = 0;
  switch (axis) {
    case 0:
      t = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
      break;
    case 1:
      t = height > 1 ? 1.0 - static_cast<double>(y) / (height - 1) : 0.0;
      break;
    case 2:
      t = width > 1 ? static_cast<double>(x) / (width - 1) : 0.0;
      break;
    default:
      t = width > 1 ? 1.0 - static_cast<double>(x) / (width - 1) : 0.0;
      break;
  }
  return kMinDepth + (1.0 - kMinDepth) * t;
}

Image degrade(const Image& clean, const DegradeParams& p) {
  if (clean.c != 3) throw ShapeError("degrade: expected 3 channels");
  std::uint64_t state = p.seed ^ 0xD1B54A32D192ED03ULL;
  std::array<double, 3> att{};
  for (int c = 0; c < 3; ++c) {
    const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    att[c] = p.attenuation[c] * (1.0 + kAttenuationJitter * (2.0 * u - 1.0));
  }
  Image out = Image::zeros_like(clean);
  for (int i = 0; i < clean.n; ++i)
    for (int y = 0; y < clean.h; ++y)
      for (int x = 0; x < clean.w; ++x) {
        const double d = depth_at(y, x, clean.h, clean.w, p.seed);
        const Eigen::Index q = clean.index(i, y, x);
        for (int c = 0; c < 3; ++c) {
          const double t = std::exp(-att[c] * d);
          const double v = clean.data(c, q) * t + p.ambient[c] * p.haze_strength * (1.0 - t);
          out.data(c, q) = std::clamp(v, 0.0, 1.0);
        }
      }
  return out;
}

std::map<std::string, DegradeParams> builtin_presets() {
  std::map<std::string, DegradeParams> t;
  t["bluish"] = {{2.0, 0.6, 0.25}, 0.8, {0.05, 0.35, 0.60}, 0};
  t["greenish"] = {{2.0, 0.3, 0.7}, 0.8, {0.10, 0.55, 0.35}, 0};
  t["yellowish"] = {{0.8, 0.6, 1.5}, 0.6, {0.50, 0.45, 0.20}, 0};
  t["lowlight"] = {{1.2, 1.0, 0.9}, 0.2, {0.05, 0.05, 0.08}, 0};
  return t;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::array<double, 3> parse_triple(const std::string& v, const std::string& where) {
  std::istringstream is(v);
  std::array<double, 3> out{};
  if (!(is >> out[0] >> out[1] >> out[2])) throw std::runtime_error(where + ": expected three numbers");
  std::string rest;
  if (is >> rest) throw std::runtime_error(where + ": trailing text '" + rest + "'");
  return out;
}

}  // namespace

std::map<std::string, DegradeParams> load_presets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open preset file " + path.string());
  std::map<std::string, DegradeParams> table;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw std::runtime_error(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      table[section] = DegradeParams{};
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error(where + ": expected key = value");
    if (section.empty()) throw std::runtime_error(where + ": key outside a [preset] section");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    DegradeParams& p = table[section];
    if (key == "attenuation") {
      p.attenuation = parse_triple(value, where);
    } else if (key == "ambient") {
      p.ambient = parse_triple(value, where);
    } else if (key == "haze_strength") {
      p.haze_strength = std::stod(value);
    } else {
      throw std::runtime_error(where + ": unknown preset key '" + key + "'");
    }
  }
  return table;
}

DegradeParams preset(const std::string& name, const std::map<std::string, DegradeParams>& table) {
  auto it = table.find(name);
  if (it == table.end()) {
    std::string known;
    for (const auto& [k, v] : table) known += (known.empty() ? "" : ", ") + k;
    throw std::invalid_argument("unknown degradation preset '" + name + "' (known: " + known + ")");
  }
  return it->second;
}

}  // namespace uwe

namespace uwe {

namespace {

double uniform(std::uint64_t& state, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53);
}

double coverage(double signed_dist) { return std::clamp(0.5 - signed_dist, 0.0, 1.0); }

}  // namespace

Image synthetic_scene(std::uint64_t seed, int height, int width) {
  std::uint64_t st = seed * 0x2545F4914F6CDD1DULL + 7;
  Image img(1, 3, height, width);
  std::array<double, 3> top{}, bottom{};
  for (int c = 0; c < 3; ++c) {
    top[c] = uniform(st, 0.25, 0.8);
    bottom[c] = uniform(st, 0.2, 0.75);
  }
  const double fx = uniform(st, 0.1, 0.4), fy = uniform(st, 0.1, 0.4), phase = uniform(st, 0, 6.283);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double t = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
      const double tex = 0.04 * std::sin(fx * x + fy * y + phase);
      for (int c = 0; c < 3; ++c) img(0, c, y, x) = (1 - t) * top[c] + t * bottom[c] + tex;
    }

  const int shapes = 3 + static_cast<int>(splitmix64(st) % 4);
  for (int k = 0; k < shapes; ++k) {
    const bool disc = splitmix64(st) % 2 == 0;
    const double cy = uniform(st, 0, height), cx = uniform(st, 0, width);
    const double ry = uniform(st, 0.08, 0.3) * height, rx = uniform(st, 0.08, 0.3) * width;
    std::array<double, 3> col{};
    for (int c = 0; c < 3; ++c) col[c] = uniform(st, 0.1, 0.9);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
        double d;
        if (disc) {
          const double r = std::min(rx, ry);
          d = std::sqrt(dx * dx + dy * dy) - r;
        } else {
          d = std::max(std::abs(dx) - rx, std::abs(dy) - ry);
        }
        const double a = coverage(d);
        if (a <= 0) continue;
        for (int c = 0; c < 3; ++c) img(0, c, y, x) = (1 - a) * img(0, c, y, x) + a * col[c];
      }
  }
  img.data = img.data.cwiseMax(0.0).cwiseMin(1.0);
  return img;
}

void write_toy_dataset(const std::filesystem::path& root, const ToyDatasetSpec& spec) {
  if (spec.count < 1 || spec.size < 1 || spec.presets.empty()) throw std::invalid_argument("write_toy_dataset: empty spec");
  std::filesystem::create_directories(root / "raw");
  std::filesystem::create_directories(root / "reference");
  const auto table = builtin_presets();
  for (int i = 0; i < spec.count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "toy_%03d", i);
    const Image clean = synthetic_scene(spec.seed * 1000003ULL + static_cast<std::uint64_t>(i), spec.size, spec.size);
    DegradeParams p = preset(spec.presets[static_cast<std::size_t>(i) % spec.presets.size()], table);
    p.seed = spec.seed + static_cast<std::uint64_t>(i);
    write_png(root / "raw" / (std::string(id) + ".png"), degrade(clean, p));
    write_png(root / "reference" / (std::string(id) + ".png"), clean);
  }
}

}  // namespace uwe
