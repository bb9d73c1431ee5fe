#ifndef UWE_LOSS_ORACLES_HPP
#define UWE_LOSS_ORACLES_HPP

// Scalar loop re-implementations of the losses, written independently of the
// vectorised library code.

#include "uwe/features.hpp"
#include "uwe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace uwe::oracle {

inline double l1_oracle(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (int n = 0; n < a.n; ++n)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x) s += std::abs(a(n, c, y, x) - b(n, c, y, x));
  return s / static_cast<double>(a.size());
}

inline double gray(const Tensor<double>& t, int n, int y, int x) {
  return 0.299 * t(n, 0, y, x) + 0.587 * t(n, 1, y, x) + 0.114 * t(n, 2, y, x);
}

// Two-pass statistics over each 11x11 window.
inline double ssim_oracle(const Tensor<double>& a, const Tensor<double>& b, double c1 = 0.02, double c2 = 0.03) {
  const int k = 11;
  double total = 0;
  int count = 0;
  for (int n = 0; n < a.n; ++n)
    for (int y0 = 0; y0 + k <= a.h; ++y0)
      for (int x0 = 0; x0 + k <= a.w; ++x0) {
        double ma = 0, mb = 0;
        for (int y = y0; y < y0 + k; ++y)
          for (int x = x0; x < x0 + k; ++x) {
            ma += gray(a, n, y, x);
            mb += gray(b, n, y, x);
          }
        ma /= k * k;
        mb /= k * k;
        double va = 0, vb = 0, cov = 0;
        for (int y = y0; y < y0 + k; ++y)
          for (int x = x0; x < x0 + k; ++x) {
            const double da = gray(a, n, y, x) - ma, db = gray(b, n, y, x) - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
          }
        va /= k * k;
        vb /= k * k;
        cov /= k * k;
        total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
  return total / count;
}

// Textbook RGB -> HSV with hue in radians.
inline double conical_oracle(double r, double g, double b) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  const double s = mx > 0 ? d / mx : 0;
  double hdeg = 0;
  if (d > 0) {
    if (mx == r) hdeg = 60 * std::fmod((g - b) / d + 6, 6.0);
    else if (mx == g) hdeg = 60 * ((b - r) / d + 2);
    else hdeg = 60 * ((r - g) / d + 4);
  }
  return s * mx * std::cos(hdeg * std::numbers::pi / 180);
}

inline double hsv_oracle(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (Eigen::Index p = 0; p < a.pixels(); ++p) {
    s += std::abs(conical_oracle(a.data(0, p), a.data(1, p), a.data(2, p)) -
                  conical_oracle(b.data(0, p), b.data(1, p), b.data(2, p)));
  }
  return s / static_cast<double>(a.pixels());
}

inline std::vector<double> conv_relu_oracle(const std::vector<double>& in, int cin, int h, int w, const Matrix<double>& W,
                                     const Vector<double>& bias) {
  const int cout = static_cast<int>(W.rows());
  std::vector<double> out(static_cast<std::size_t>(cout) * h * w);
  for (int o = 0; o < cout; ++o)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = bias[o];
        for (int ky = -1; ky <= 1; ++ky)
          for (int kx = -1; kx <= 1; ++kx) {
            const int sy = y + ky, sx = x + kx;
            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
            for (int c = 0; c < cin; ++c) {
              acc += W(o, ((ky + 1) * 3 + (kx + 1)) * cin + c) * in[(static_cast<std::size_t>(c) * h + sy) * w + sx];
            }
          }
        out[(static_cast<std::size_t>(o) * h + y) * w + x] = std::max(acc, 0.0);
      }
  return out;
}

inline double perceptual_oracle(const Tensor<double>& a, const Tensor<double>& b, const ConvFeatureStack<double>& ex) {
  auto features = [&](const Tensor<double>& t) {
    std::vector<double> v(static_cast<std::size_t>(3) * t.h * t.w);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x) v[(static_cast<std::size_t>(c) * t.h + y) * t.w + x] = t(0, c, y, x);
    int cin = 3;
    for (const auto& st : ex.stages()) {
      v = conv_relu_oracle(v, cin, t.h, t.w, st.weight, st.bias);
      cin = static_cast<int>(st.weight.rows());
    }
    return v;
  };
  const auto fa = features(a), fb = features(b);
  double s = 0;
  for (std::size_t i = 0; i < fa.size(); ++i) s += (fa[i] - fb[i]) * (fa[i] - fb[i]);
  return s / static_cast<double>(fa.size());
}

}  // namespace uwe::oracle

#endif  // UWE_LOSS_ORACLES_HPP
