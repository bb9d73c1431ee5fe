#ifndef UWE_CURVES_HPP
#define UWE_CURVES_HPP

#include "uwe/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace uwe {

/// Piece-wise linear scaling curve over [0, 1] with M equal intervals and
/// M + 1 knot values. Knots are unconstrained reals.
template <typename Scalar>
struct Curve {
  Vector<Scalar> knots;

  int intervals() const { return static_cast<int>(knots.size()) - 1; }

  static Curve constant(int intervals, Scalar value) { return Curve{Vector<Scalar>::Constant(intervals + 1, value)}; }

  static Curve identity_ramp(int intervals) {
    return Curve{Vector<Scalar>::LinSpaced(intervals + 1, Scalar(0), Scalar(1))};
  }
};

namespace detail {

template <typename Scalar>
Scalar unit_ramp(Scalar t) {
  return std::clamp(t, Scalar(0), Scalar(1));
}

}  // namespace detail

/// S(x) = k_0 + sum_m (k_{m+1} - k_m) * clamp(M x - m, 0, 1).
template <typename Scalar, typename Knots>
Scalar eval_curve(const Eigen::MatrixBase<Knots>& knots, Scalar x) {
  const int intervals = static_cast<int>(knots.size()) - 1;
  Scalar acc = knots[0];
  for (int m = 0; m < intervals; ++m) {
    acc += (knots[m + 1] - knots[m]) * detail::unit_ramp(Scalar(intervals) * x - Scalar(m));
  }
  return acc;
}

template <typename Scalar>
Scalar eval_curve(const Curve<Scalar>& c, Scalar x) {
  return eval_curve(c.knots, x);
}

/// dS/dx, using the right derivative at knot abscissae.
template <typename Scalar, typename Knots>
Scalar curve_slope(const Eigen::MatrixBase<Knots>& knots, Scalar x) {
  const int intervals = static_cast<int>(knots.size()) - 1;
  Scalar slope = 0;
  for (int m = 0; m < intervals; ++m) {
    const Scalar t = Scalar(intervals) * x - Scalar(m);
    if (t >= Scalar(0) && t < Scalar(1)) slope += Scalar(intervals) * (knots[m + 1] - knots[m]);
  }
  return slope;
}

/// Accumulates scale * dS/dk into `grad` (same length as the knot vector).
template <typename Scalar, typename Grad>
void accumulate_knot_grad(int intervals, Scalar x, Scalar scale, Eigen::MatrixBase<Grad>& grad) {
  Scalar prev = 0;  // ramp of interval m - 1
  for (int m = 0; m <= intervals; ++m) {
    const Scalar ramp = m < intervals ? detail::unit_ramp(Scalar(intervals) * x - Scalar(m)) : Scalar(0);
    const Scalar coeff = (m == 0 ? Scalar(1) : prev) - ramp;
    grad[m] += scale * coeff;
    prev = ramp;
  }
}

/// The four global adjustment curves of the HSV block.
template <typename Scalar>
struct CurveSet {
  Curve<Scalar> value_by_value;
  Curve<Scalar> saturation_by_saturation;
  Curve<Scalar> saturation_by_hue;
  Curve<Scalar> hue_by_hue;

  static constexpr int kCurves = 4;

  int intervals() const { return value_by_value.intervals(); }

  static CurveSet unity(int intervals) {
    const auto one = Curve<Scalar>::constant(intervals, Scalar(1));
    return CurveSet{one, one, one, one};
  }

  /// Curves stored back to back in the order v(v), s(s), s(h), h(h).
  template <typename Flat>
  static CurveSet from_flat(const Eigen::MatrixBase<Flat>& flat) {
    const Eigen::Index len = flat.size() / kCurves;
    if (len * kCurves != flat.size() || len < 2) throw ShapeError("CurveSet: knot vector length must be 4*(M+1)");
    CurveSet cs;
    cs.value_by_value.knots = flat.segment(0, len);
    cs.saturation_by_saturation.knots = flat.segment(len, len);
    cs.saturation_by_hue.knots = flat.segment(2 * len, len);
    cs.hue_by_hue.knots = flat.segment(3 * len, len);
    return cs;
  }

  Vector<Scalar> flat() const {
    const Eigen::Index len = value_by_value.knots.size();
    if (saturation_by_saturation.knots.size() != len || saturation_by_hue.knots.size() != len ||
        hue_by_hue.knots.size() != len) {
      throw ShapeError("CurveSet: curves must share the same M");
    }
    Vector<Scalar> out(kCurves * len);
    out << value_by_value.knots, saturation_by_saturation.knots, saturation_by_hue.knots, hue_by_hue.knots;
    return out;
  }
};

template <typename Scalar>
Scalar wrap_unit(Scalar x) {
  Scalar r = x - std::floor(x);
  if (r >= Scalar(1)) r -= Scalar(1);
  return r;
}

/// Applies per-image curve sets to an HSV batch.
///
/// `knots` is (4 * (M + 1)) x batch, one flattened CurveSet per column.
///   v' = clamp(v * S_vv(v))
///   s' = clamp(clamp(s * S_ss(s)) * S_sh(h))
///   h' = wrap(h * S_hh(h))
/// All curves read the unadjusted input pixel.
template <typename Scalar>
Tensor<Scalar> apply_curves(const Tensor<Scalar>& hsv, const Matrix<Scalar>& knots) {
  if (hsv.c != 3) throw ShapeError("apply_curves: expected 3 channels");
  if (knots.cols() != hsv.n || knots.rows() % CurveSet<Scalar>::kCurves != 0) {
    throw ShapeError("apply_curves: knot matrix must be 4*(M+1) x batch");
  }
  const Eigen::Index len = knots.rows() / CurveSet<Scalar>::kCurves;
  Tensor<Scalar> out = Tensor<Scalar>::zeros_like(hsv);
  for (int img = 0; img < hsv.n; ++img) {
    const auto k = knots.col(img);
    const auto vv = k.segment(0, len), ss = k.segment(len, len), sh = k.segment(2 * len, len),
               hh = k.segment(3 * len, len);
    const Eigen::Index first = static_cast<Eigen::Index>(img) * hsv.pixels_per_image();
    for (Eigen::Index p = first; p < first + hsv.pixels_per_image(); ++p) {
      const Scalar h = hsv.data(0, p), s = hsv.data(1, p), v = hsv.data(2, p);
      const Scalar s_mid = std::clamp(s * eval_curve(ss, s), Scalar(0), Scalar(1));
      out.data(0, p) = wrap_unit(h * eval_curve(hh, h));
      out.data(1, p) = std::clamp(s_mid * eval_curve(sh, h), Scalar(0), Scalar(1));
      out.data(2, p) = std::clamp(v * eval_curve(vv, v), Scalar(0), Scalar(1));
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> apply_curves(const Tensor<Scalar>& hsv, const CurveSet<Scalar>& cs) {
  Matrix<Scalar> knots = cs.flat().replicate(1, hsv.n);
  return apply_curves(hsv, knots);
}

template <typename Scalar>
struct CurveGrads {
  Tensor<Scalar> hsv;    // dL/d(input hsv)
  Matrix<Scalar> knots;  // dL/d(knots), same layout as the knot matrix
};

template <typename Scalar>
CurveGrads<Scalar> apply_curves_backward(const Tensor<Scalar>& hsv, const Matrix<Scalar>& knots,
                                         const Tensor<Scalar>& grad_out) {
  require_same_shape(hsv, grad_out, "apply_curves_backward");
  const Eigen::Index len = knots.rows() / CurveSet<Scalar>::kCurves;
  const int intervals = static_cast<int>(len) - 1;
  CurveGrads<Scalar> g{Tensor<Scalar>::zeros_like(hsv), Matrix<Scalar>::Zero(knots.rows(), knots.cols())};
  auto in_unit = [](Scalar x) { return x >= Scalar(0) && x <= Scalar(1); };

  for (int img = 0; img < hsv.n; ++img) {
    const auto k = knots.col(img);
    const auto vv = k.segment(0, len), ss = k.segment(len, len), sh = k.segment(2 * len, len),
               hh = k.segment(3 * len, len);
    auto gk = g.knots.col(img);
    auto g_vv = gk.segment(0, len);
    auto g_ss = gk.segment(len, len);
    auto g_sh = gk.segment(2 * len, len);
    auto g_hh = gk.segment(3 * len, len);
    const Eigen::Index first = static_cast<Eigen::Index>(img) * hsv.pixels_per_image();
    for (Eigen::Index p = first; p < first + hsv.pixels_per_image(); ++p) {
      const Scalar h = hsv.data(0, p), s = hsv.data(1, p), v = hsv.data(2, p);
      const Scalar gh_out = grad_out.data(0, p), gs_out = grad_out.data(1, p), gv_out = grad_out.data(2, p);
      Scalar gh = 0, gs = 0, gv = 0;

      // value
      const Scalar s_vv = eval_curve(vv, v);
      if (in_unit(v * s_vv) && gv_out != Scalar(0)) {
        gv += gv_out * (s_vv + v * curve_slope(vv, v));
        accumulate_knot_grad(intervals, v, gv_out * v, g_vv);
      }

      // saturation, two multiplicative stages
      const Scalar s_ss = eval_curve(ss, s);
      const Scalar pre_mid = s * s_ss;
      const Scalar s_mid = std::clamp(pre_mid, Scalar(0), Scalar(1));
      const Scalar s_sh = eval_curve(sh, h);
      if (in_unit(s_mid * s_sh) && gs_out != Scalar(0)) {
        gh += gs_out * s_mid * curve_slope(sh, h);
        accumulate_knot_grad(intervals, h, gs_out * s_mid, g_sh);
        const Scalar g_mid = gs_out * s_sh;
        if (in_unit(pre_mid)) {
          gs += g_mid * (s_ss + s * curve_slope(ss, s));
          accumulate_knot_grad(intervals, s, g_mid * s, g_ss);
        }
      }

      // hue, wrap has unit slope almost everywhere
      if (gh_out != Scalar(0)) {
        gh += gh_out * (eval_curve(hh, h) + h * curve_slope(hh, h));
        accumulate_knot_grad(intervals, h, gh_out * h, g_hh);
      }

      g.hsv.data(0, p) = gh;
      g.hsv.data(1, p) = gs;
      g.hsv.data(2, p) = gv;
    }
  }
  return g;
}

}  // namespace uwe

#endif  // UWE_CURVES_HPP
