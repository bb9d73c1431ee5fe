#ifndef UWE_COLORSPACE_HPP
#define UWE_COLORSPACE_HPP

#include "uwe/tensor.hpp"

#include <algorithm>
#include <numbers>

// RGB <-> HSV conversions with analytic Jacobians.
//
// Hue is kept as angle / 360 in [0, 1). Degrees are used only inside the
// conversion arithmetic. Max-channel ties resolve with priority R > G > B and
// min-channel ties with priority B > G > R, so every pixel has exactly one
// (sub)gradient. HSV -> RGB uses the piecewise-linear hue ramps with the
// saturating ramp clamp(x, 0, 60).

namespace uwe {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

namespace detail {

template <typename Scalar>
Scalar clamp_unit_input(Scalar x) {
  return std::clamp(x, Scalar(0), Scalar(1));
}

// Index of the largest channel, ties to the lower index (R > G > B).
template <typename Scalar>
int argmax_rgb(const Vec3<Scalar>& p) {
  if (p[0] >= p[1] && p[0] >= p[2]) return 0;
  if (p[1] >= p[2]) return 1;
  return 2;
}

// Index of the smallest channel, ties to the higher index (B > G > R).
template <typename Scalar>
int argmin_rgb(const Vec3<Scalar>& p) {
  if (p[2] <= p[1] && p[2] <= p[0]) return 2;
  if (p[1] <= p[0]) return 1;
  return 0;
}

// Saturating ramp of the HSV -> RGB conversion, in degrees.
template <typename Scalar>
Scalar ramp60(Scalar x) {
  return std::clamp(x, Scalar(0), Scalar(60));
}

template <typename Scalar>
Scalar ramp60_slope(Scalar x) {
  return (x >= Scalar(0) && x < Scalar(60)) ? Scalar(1) : Scalar(0);
}

}  // namespace detail

/// Converts one RGB pixel to (h, s, v). If `jacobian` is non-null it receives
/// d(h, s, v) / d(r, g, b).
template <typename Scalar>
Vec3<Scalar> rgb_to_hsv_pixel(const Vec3<Scalar>& rgb_in, Mat3<Scalar>* jacobian = nullptr) {
  const Vec3<Scalar> p = rgb_in.unaryExpr([](Scalar x) { return detail::clamp_unit_input(x); });
  const int imax = detail::argmax_rgb(p);
  const int imin = detail::argmin_rgb(p);
  const Scalar v = p[imax];
  const Scalar delta = v - p[imin];

  Vec3<Scalar> hsv(Scalar(0), Scalar(0), v);
  if (jacobian) {
    jacobian->setZero();
    (*jacobian)(2, imax) = Scalar(1);
  }
  if (v > Scalar(0)) {
    hsv[1] = delta / v;
    if (jacobian) {
      // s = 1 - min / v
      (*jacobian)(1, imax) += p[imin] / (v * v);
      (*jacobian)(1, imin) += Scalar(-1) / v;
    }
  }
  if (delta <= Scalar(0)) return hsv;  // achromatic: hue pinned to 0

  // H = offset + 60 * (p[a] - p[b]) / delta, with (a, b) the two other channels
  // in cyclic order after the max channel.
  const int a = (imax + 1) % 3;
  const int b = (imax + 2) % 3;
  const Scalar offset = Scalar(120) * imax;
  const Scalar num = p[a] - p[b];
  Scalar deg = offset + Scalar(60) * num / delta;
  if (deg < Scalar(0)) deg += Scalar(360);
  Scalar hue = deg / Scalar(360);
  if (hue >= Scalar(1)) hue -= Scalar(1);
  hsv[0] = hue;

  if (jacobian) {
    Vec3<Scalar> dnum = Vec3<Scalar>::Zero();
    dnum[a] = Scalar(1);
    dnum[b] = Scalar(-1);
    Vec3<Scalar> ddelta = Vec3<Scalar>::Zero();
    ddelta[imax] += Scalar(1);
    ddelta[imin] -= Scalar(1);
    const Scalar scale = Scalar(60) / Scalar(360);
    for (int k = 0; k < 3; ++k) {
      (*jacobian)(0, k) = scale * (dnum[k] * delta - num * ddelta[k]) / (delta * delta);
    }
  }
  return hsv;
}

/// Converts one (h, s, v) pixel to RGB through the piecewise-linear hue ramps.
/// If `jacobian` is non-null it receives d(r, g, b) / d(h, s, v).
template <typename Scalar>
Vec3<Scalar> hsv_to_rgb_pixel(const Vec3<Scalar>& hsv_in, Mat3<Scalar>* jacobian = nullptr) {
  using detail::ramp60;
  using detail::ramp60_slope;
  const Scalar h = detail::clamp_unit_input(hsv_in[0]);
  const Scalar s = detail::clamp_unit_input(hsv_in[1]);
  const Scalar v = detail::clamp_unit_input(hsv_in[2]);
  const Scalar deg = Scalar(360) * h;
  const Scalar k = s * v / Scalar(60);
  const Scalar floor_level = v * (Scalar(1) - s);

  // Each channel is base + k * (rise - fall), where rise/fall are ramps
  // starting at the listed hue angles.
  const Scalar shifts_rise[3] = {Scalar(240), Scalar(0), Scalar(120)};
  const Scalar shifts_fall[3] = {Scalar(60), Scalar(180), Scalar(300)};
  const Scalar base[3] = {v, floor_level, floor_level};

  Vec3<Scalar> rgb;
  if (jacobian) jacobian->setZero();
  for (int ch = 0; ch < 3; ++ch) {
    const Scalar rise = ramp60(deg - shifts_rise[ch]);
    const Scalar fall = ramp60(deg - shifts_fall[ch]);
    // The red channel starts at v and first falls; the others start at v(1-s).
    const Scalar ramp = rise - fall;
    const Scalar raw = base[ch] + k * ramp;
    rgb[ch] = std::clamp(raw, Scalar(0), Scalar(1));
    if (jacobian && raw >= Scalar(0) && raw <= Scalar(1)) {
      const Scalar dramp_dh =
          Scalar(360) * (ramp60_slope(deg - shifts_rise[ch]) - ramp60_slope(deg - shifts_fall[ch]));
      const Scalar dbase_dv = ch == 0 ? Scalar(1) : Scalar(1) - s;
      const Scalar dbase_ds = ch == 0 ? Scalar(0) : -v;
      (*jacobian)(ch, 0) = k * dramp_dh;
      (*jacobian)(ch, 1) = dbase_ds + v / Scalar(60) * ramp;
      (*jacobian)(ch, 2) = dbase_dv + s / Scalar(60) * ramp;
    }
  }
  return rgb;
}

template <typename Scalar>
Tensor<Scalar> rgb_to_hsv(const Tensor<Scalar>& rgb) {
  if (rgb.c != 3) throw ShapeError("rgb_to_hsv: expected 3 channels");
  require_unit_range(rgb, "rgb_to_hsv");
  Tensor<Scalar> out = Tensor<Scalar>::zeros_like(rgb);
  for (Eigen::Index p = 0; p < rgb.pixels(); ++p) out.data.col(p) = rgb_to_hsv_pixel<Scalar>(rgb.data.col(p));
  return out;
}

template <typename Scalar>
Tensor<Scalar> hsv_to_rgb(const Tensor<Scalar>& hsv) {
  if (hsv.c != 3) throw ShapeError("hsv_to_rgb: expected 3 channels");
  require_unit_range(hsv, "hsv_to_rgb");
  Tensor<Scalar> out = Tensor<Scalar>::zeros_like(hsv);
  for (Eigen::Index p = 0; p < hsv.pixels(); ++p) out.data.col(p) = hsv_to_rgb_pixel<Scalar>(hsv.data.col(p));
  return out;
}

/// Vector-Jacobian product of rgb_to_hsv: maps dL/d(hsv) at `rgb` to dL/d(rgb).
template <typename Scalar>
Tensor<Scalar> rgb_to_hsv_backward(const Tensor<Scalar>& rgb, const Tensor<Scalar>& grad_hsv) {
  require_same_shape(rgb, grad_hsv, "rgb_to_hsv_backward");
  Tensor<Scalar> grad = Tensor<Scalar>::zeros_like(rgb);
  Mat3<Scalar> jac;
  for (Eigen::Index p = 0; p < rgb.pixels(); ++p) {
    rgb_to_hsv_pixel<Scalar>(rgb.data.col(p), &jac);
    grad.data.col(p).noalias() = jac.transpose() * grad_hsv.data.col(p);
  }
  return grad;
}

/// Vector-Jacobian product of hsv_to_rgb.
template <typename Scalar>
Tensor<Scalar> hsv_to_rgb_backward(const Tensor<Scalar>& hsv, const Tensor<Scalar>& grad_rgb) {
  require_same_shape(hsv, grad_rgb, "hsv_to_rgb_backward");
  Tensor<Scalar> grad = Tensor<Scalar>::zeros_like(hsv);
  Mat3<Scalar> jac;
  for (Eigen::Index p = 0; p < hsv.pixels(); ++p) {
    hsv_to_rgb_pixel<Scalar>(hsv.data.col(p), &jac);
    grad.data.col(p).noalias() = jac.transpose() * grad_rgb.data.col(p);
  }
  return grad;
}

/// Hue plane in radians, for the conical HSV representation.
template <typename Scalar>
Scalar hue_radians(Scalar hue_unit) {
  return Scalar(2) * std::numbers::pi_v<Scalar> * hue_unit;
}

}  // namespace uwe

#endif  // UWE_COLORSPACE_HPP
