#ifndef UWE_IMAGE_IO_HPP
#define UWE_IMAGE_IO_HPP

#include "uwe/tensor.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace uwe {

using Real = double;
using Image = Tensor<Real>;

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decodes an 8-bit PNG or JPEG into a 1 x 3 x H x W tensor scaled by 1/255.
/// Gray and alpha channels are expanded or dropped.
Image read_image(const std::filesystem::path& path);

/// Writes image `img` of the batch as an 8-bit RGB PNG (values rounded after
/// clamping to [0, 1]).
void write_png(const std::filesystem::path& path, const Image& batch, int img = 0);

/// Quantises to the 8-bit grid, i.e. round(255 x) / 255.
Image quantize8(const Image& img);

bool is_image_file(const std::filesystem::path& path);

/// Image files directly inside `dir`, sorted by filename.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace uwe

#endif  // UWE_IMAGE_IO_HPP
