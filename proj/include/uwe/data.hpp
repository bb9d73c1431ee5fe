#ifndef UWE_DATA_HPP
#define UWE_DATA_HPP

#include "uwe/image_io.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace uwe {

struct PairedSample {
  Image raw;
  Image reference;
  std::string id;
};

enum class Split { train, test };

Split parse_split(const std::string& s);

struct PairEntry {
  std::string id;
  std::filesystem::path raw;
  std::filesystem::path reference;
};

/// Index of a paired dataset; images are decoded on demand.
struct PairedDataset {
  std::vector<PairEntry> entries;
  std::vector<std::string> warnings;

  std::size_t size() const { return entries.size(); }
  PairedSample load(std::size_t i) const;
};

/// Pairs `<root>/raw/<id>.*` with `<root>/reference/<id>.*` (or the same under
/// `<root>/<split>/` when that directory exists). The test split is ordered by
/// id; the train split is shuffled with `seed`. Unmatched files are skipped
/// with a warning; an empty result throws.
PairedDataset load_pairs(const std::filesystem::path& root, Split split, std::uint64_t seed = 0);

/// In-place shuffle with a self-contained generator, identical on every
/// platform for a given seed.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed);

std::uint64_t splitmix64(std::uint64_t& state);

// Geometry --------------------------------------------------------------------

struct TransformConfig {
  int resize = 350;
  int crop = 320;
};

/// Bilinear resampling with half-pixel centres.
Image resize_bilinear(const Image& img, int height, int width);
Image crop(const Image& img, int top, int left, int height, int width);

/// Resizes both images to resize x resize and cuts the same random
/// crop x crop window out of each.
PairedSample train_transform(const PairedSample& s, std::uint64_t seed, const TransformConfig& cfg = {});

// Synthetic degradation ---------------------------------------------------------

struct DegradeParams {
  std::array<double, 3> attenuation{0.0, 0.0, 0.0};  // per channel, per unit depth
  double haze_strength = 0.0;
  std::array<double, 3> ambient{0.0, 0.0, 0.0};
  std::uint64_t seed = 0;
};

/// Depth ramp in [kMinDepth, 1] along a seed-chosen image axis.
inline constexpr double kMinDepth = 0.25;
/// Seeded multiplicative jitter applied to the attenuation coefficients.
inline constexpr double kAttenuationJitter = 0.1;

double depth_at(int y, int x, int height, int width, std::uint64_t seed);

/// out_c = clean_c * t_c + ambient_c * haze * (1 - t_c), t_c = exp(-a_c d).
Image degrade(const Image& clean, const DegradeParams& p);

/// Built-in presets: bluish, greenish, yellowish, lowlight.
std::map<std::string, DegradeParams> builtin_presets();

/// Reads presets from an INI-style file:
///   [name]
///   attenuation = r g b
///   haze_strength = h
///   ambient = r g b
std::map<std::string, DegradeParams> load_presets(const std::filesystem::path& path);

DegradeParams preset(const std::string& name, const std::map<std::string, DegradeParams>& table = builtin_presets());

// Toy data ----------------------------------------------------------------------

/// Procedural clean scene: a two-colour gradient background with a few
/// anti-aliased discs and rectangles and a faint texture.
Image synthetic_scene(std::uint64_t seed, int height, int width);

struct ToyDatasetSpec {
  int count = 8;
  int size = 32;
  std::uint64_t seed = 1;
  std::vector<std::string> presets{"bluish", "greenish", "yellowish", "lowlight"};
};

/// Writes `<root>/raw/toy_NNN.png` (degraded, presets used round robin) and
/// `<root>/reference/toy_NNN.png` (clean).
void write_toy_dataset(const std::filesystem::path& root, const ToyDatasetSpec& spec);

// -----------------------------------------------------------------------------

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::uint64_t state = seed;
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(splitmix64(state) % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace uwe

#endif  // UWE_DATA_HPP
