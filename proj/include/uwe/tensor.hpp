#ifndef UWE_TENSOR_HPP
#define UWE_TENSOR_HPP

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace uwe {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// A batch of feature maps.
///
/// Storage is a (channels x pixels) column-major matrix: each column holds the
/// channel vector of one pixel, and pixel index p = (n * height + y) * width + x.
/// Three-channel tensors are the image currency of the library; in RGB space
/// the rows are (R, G, B), in HSV space they are (h, s, v) with hue stored as
/// angle / 360.
template <typename Scalar>
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  Matrix<Scalar> data;

  Tensor() = default;
  Tensor(int batch, int channels, int height, int width)
      : n(batch), c(channels), h(height), w(width),
        data(Matrix<Scalar>::Zero(channels, static_cast<Eigen::Index>(batch) * height * width)) {}

  static Tensor constant(int batch, int channels, int height, int width, Scalar value) {
    Tensor t(batch, channels, height, width);
    t.data.setConstant(value);
    return t;
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.n, other.c, other.h, other.w); }

  Eigen::Index pixels() const { return data.cols(); }
  Eigen::Index pixels_per_image() const { return static_cast<Eigen::Index>(h) * w; }
  Eigen::Index size() const { return data.size(); }

  Eigen::Index index(int img, int y, int x) const {
    return (static_cast<Eigen::Index>(img) * h + y) * w + x;
  }

  Scalar& operator()(int img, int ch, int y, int x) { return data(ch, index(img, y, x)); }
  Scalar operator()(int img, int ch, int y, int x) const { return data(ch, index(img, y, x)); }

  /// Columns belonging to image `img`.
  auto image(int img) { return data.middleCols(static_cast<Eigen::Index>(img) * pixels_per_image(), pixels_per_image()); }
  auto image(int img) const {
    return data.middleCols(static_cast<Eigen::Index>(img) * pixels_per_image(), pixels_per_image());
  }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> t;
    t.n = n;
    t.c = c;
    t.h = h;
    t.w = w;
    t.data = data.template cast<Other>();
    return t;
  }
};

inline std::string shape_string(int n, int c, int h, int w) {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

template <typename Scalar>
std::string shape_string(const Tensor<Scalar>& t) {
  return shape_string(t.n, t.c, t.h, t.w);
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
}

/// Rejects NaN/Inf and values outside [0, 1] by more than `tol`.
template <typename Scalar>
void require_unit_range(const Tensor<Scalar>& t, const char* what, double tol = 1e-6) {
  if (t.n < 1 || t.h < 1 || t.w < 1) throw ShapeError(std::string(what) + ": empty image");
  const Scalar* p = t.data.data();
  for (Eigen::Index i = 0; i < t.data.size(); ++i) {
    const double v = static_cast<double>(p[i]);
    if (!std::isfinite(v)) throw DomainError(std::string(what) + ": non-finite value");
    if (v < -tol || v > 1.0 + tol) {
      throw DomainError(std::string(what) + ": value " + std::to_string(v) + " outside [0,1]");
    }
  }
}

/// Horizontal mirror of every image in the batch.
template <typename Scalar>
Tensor<Scalar> flip_horizontal(const Tensor<Scalar>& t) {
  Tensor<Scalar> out = Tensor<Scalar>::zeros_like(t);
  for (int i = 0; i < t.n; ++i)
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x) out.data.col(out.index(i, y, x)) = t.data.col(t.index(i, y, t.w - 1 - x));
  return out;
}

/// Extracts images [first, first + count) as a new batch.
template <typename Scalar>
Tensor<Scalar> slice_batch(const Tensor<Scalar>& t, int first, int count) {
  Tensor<Scalar> out(count, t.c, t.h, t.w);
  out.data = t.data.middleCols(static_cast<Eigen::Index>(first) * t.pixels_per_image(),
                               static_cast<Eigen::Index>(count) * t.pixels_per_image());
  return out;
}

/// Stacks channel blocks of equally shaped tensors.
template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const Tensor<Scalar>& c) {
  if (a.n != b.n || a.h != b.h || a.w != b.w || a.n != c.n || a.h != c.h || a.w != c.w) {
    throw ShapeError("concat_channels: spatial or batch mismatch");
  }
  Tensor<Scalar> out(a.n, a.c + b.c + c.c, a.h, a.w);
  out.data.topRows(a.c) = a.data;
  out.data.middleRows(a.c, b.c) = b.data;
  out.data.bottomRows(c.c) = c.data;
  return out;
}

template <typename Scalar>
Tensor<Scalar> channel_slice(const Tensor<Scalar>& t, int first, int count) {
  Tensor<Scalar> out(t.n, count, t.h, t.w);
  out.data = t.data.middleRows(first, count);
  return out;
}

}  // namespace uwe

#endif  // UWE_TENSOR_HPP
