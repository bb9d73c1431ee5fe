#ifndef UWE_LOSSES_HPP
#define UWE_LOSSES_HPP

#include "uwe/colorspace.hpp"
#include "uwe/features.hpp"
#include "uwe/tensor.hpp"

#include <cmath>
#include <iostream>
#include <utility>

namespace uwe {

/// A scalar loss and its gradient with respect to the prediction.
template <typename Scalar>
struct LossGrad {
  Scalar value = 0;
  Tensor<Scalar> grad;
};

// --------------------------------------------------------------------------
// L1

template <typename Scalar>
Scalar l1_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt) {
  require_same_shape(pred, gt, "l1_loss");
  return (pred.data - gt.data).cwiseAbs().mean();
}

template <typename Scalar>
LossGrad<Scalar> l1_loss_grad(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt) {
  require_same_shape(pred, gt, "l1_loss");
  LossGrad<Scalar> out{l1_loss(pred, gt), Tensor<Scalar>::zeros_like(pred)};
  const Scalar inv = Scalar(1) / Scalar(pred.size());
  out.grad.data = (pred.data - gt.data).unaryExpr([inv](Scalar d) {
    return d > Scalar(0) ? inv : (d < Scalar(0) ? -inv : Scalar(0));
  });
  return out;
}

// --------------------------------------------------------------------------
// SSIM on luma, uniform square windows, valid positions only.

struct SsimParams {
  int window = 11;
  double c1 = 0.02;
  double c2 = 0.03;
};

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

/// Single-channel luma of an RGB batch.
template <typename Scalar>
Tensor<Scalar> luma(const Tensor<Scalar>& rgb) {
  if (rgb.c != 3) throw ShapeError("luma: expected 3 channels");
  Tensor<Scalar> out(rgb.n, 1, rgb.h, rgb.w);
  out.data = Scalar(kLumaR) * rgb.data.row(0) + Scalar(kLumaG) * rgb.data.row(1) + Scalar(kLumaB) * rgb.data.row(2);
  return out;
}

namespace detail {

// Summed-area table with a zero first row and column: (h + 1) x (w + 1).
template <typename Scalar>
Matrix<Scalar> integral(const Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>& plane, int h, int w) {
  Matrix<Scalar> sat = Matrix<Scalar>::Zero(h + 1, w + 1);
  for (int y = 0; y < h; ++y) {
    Scalar row = 0;
    for (int x = 0; x < w; ++x) {
      row += plane[static_cast<Eigen::Index>(y) * w + x];
      sat(y + 1, x + 1) = sat(y, x + 1) + row;
    }
  }
  return sat;
}

template <typename Scalar>
Scalar box_sum(const Matrix<Scalar>& sat, int y0, int x0, int y1, int x1) {
  // Sum over rows [y0, y1) and columns [x0, x1).
  return sat(y1, x1) - sat(y0, x1) - sat(y1, x0) + sat(y0, x0);
}

template <typename Scalar>
struct SsimWindowStats {
  Scalar value;
  // Partials of the window SSIM with respect to mean(a), mean(a^2), mean(a*b).
  Scalar d_mean;
  Scalar d_sq;
  Scalar d_cross;
};

template <typename Scalar>
SsimWindowStats<Scalar> ssim_window(Scalar mu_a, Scalar mu_b, Scalar e_aa, Scalar e_bb, Scalar e_ab,
                                    const SsimParams& p) {
  const Scalar c1 = Scalar(p.c1), c2 = Scalar(p.c2);
  const Scalar var_a = e_aa - mu_a * mu_a;
  const Scalar var_b = e_bb - mu_b * mu_b;
  const Scalar cov = e_ab - mu_a * mu_b;
  const Scalar a1 = Scalar(2) * mu_a * mu_b + c1;
  const Scalar b1 = mu_a * mu_a + mu_b * mu_b + c1;
  const Scalar a2 = Scalar(2) * cov + c2;
  const Scalar b2 = var_a + var_b + c2;
  const Scalar num = a1 * a2;
  const Scalar den = b1 * b2;
  const Scalar s = num / den;
  // d(num), d(den) with respect to mu_a, e_aa, e_ab (mu_b, e_bb held fixed)
  const Scalar dnum_mu = Scalar(2) * mu_b * a2 - Scalar(2) * mu_b * a1;
  const Scalar dden_mu = Scalar(2) * mu_a * b2 - Scalar(2) * mu_a * b1;
  const Scalar dden_sq = b1;
  const Scalar dnum_cross = Scalar(2) * a1;
  return {s, (dnum_mu - s * dden_mu) / den, (-s * dden_sq) / den, dnum_cross / den};
}

}  // namespace detail

/// Mean SSIM over all valid window positions of all images, and optionally
/// its gradient with respect to `a` (single-channel tensors).
template <typename Scalar>
Scalar ssim_mean_plane(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const SsimParams& params,
                       Tensor<Scalar>* grad_a) {
  require_same_shape(a, b, "ssim");
  if (a.c != 1) throw ShapeError("ssim: expected single-channel planes");
  const int win = params.window;
  if (a.h < win || a.w < win) {
    throw ShapeError("ssim: image " + std::to_string(a.h) + "x" + std::to_string(a.w) + " smaller than the " +
                     std::to_string(win) + "x" + std::to_string(win) + " window");
  }
  const int oh = a.h - win + 1, ow = a.w - win + 1;
  const Scalar inv_n = Scalar(1) / Scalar(win * win);
  const Scalar inv_windows = Scalar(1) / Scalar(static_cast<double>(oh) * ow * a.n);
  if (grad_a) *grad_a = Tensor<Scalar>::zeros_like(a);

  Scalar total = 0;
  using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  for (int img = 0; img < a.n; ++img) {
    const Row pa = a.image(img).row(0);
    const Row pb = b.image(img).row(0);
    const Matrix<Scalar> sa = detail::integral<Scalar>(pa, a.h, a.w);
    const Matrix<Scalar> sb = detail::integral<Scalar>(pb, a.h, a.w);
    const Matrix<Scalar> saa = detail::integral<Scalar>(pa.cwiseProduct(pa), a.h, a.w);
    const Matrix<Scalar> sbb = detail::integral<Scalar>(pb.cwiseProduct(pb), a.h, a.w);
    const Matrix<Scalar> sab = detail::integral<Scalar>(pa.cwiseProduct(pb), a.h, a.w);

    // Coefficient planes over window positions, scaled by dL/ds = inv_windows.
    Row c_mean, c_sq, c_cross;
    if (grad_a) {
      c_mean.setZero(static_cast<Eigen::Index>(oh) * ow);
      c_sq.setZero(c_mean.size());
      c_cross.setZero(c_mean.size());
    }
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const auto st = detail::ssim_window<Scalar>(
            detail::box_sum(sa, y, x, y + win, x + win) * inv_n, detail::box_sum(sb, y, x, y + win, x + win) * inv_n,
            detail::box_sum(saa, y, x, y + win, x + win) * inv_n, detail::box_sum(sbb, y, x, y + win, x + win) * inv_n,
            detail::box_sum(sab, y, x, y + win, x + win) * inv_n, params);
        total += st.value;
        if (grad_a) {
          const Eigen::Index k = static_cast<Eigen::Index>(y) * ow + x;
          c_mean[k] = st.d_mean * inv_n * inv_windows;
          c_sq[k] = st.d_sq * inv_n * inv_windows;
          c_cross[k] = st.d_cross * inv_n * inv_windows;
        }
      }

    if (grad_a) {
      // Every pixel collects the coefficients of all windows that cover it.
      const Matrix<Scalar> tm = detail::integral<Scalar>(c_mean, oh, ow);
      const Matrix<Scalar> ts = detail::integral<Scalar>(c_sq, oh, ow);
      const Matrix<Scalar> tc = detail::integral<Scalar>(c_cross, oh, ow);
      auto ga = grad_a->image(img);
      for (int y = 0; y < a.h; ++y) {
        const int y0 = std::max(0, y - win + 1), y1 = std::min(oh, y + 1);
        for (int x = 0; x < a.w; ++x) {
          const int x0 = std::max(0, x - win + 1), x1 = std::min(ow, x + 1);
          const Eigen::Index q = static_cast<Eigen::Index>(y) * a.w + x;
          ga(0, q) = detail::box_sum(tm, y0, x0, y1, x1) + Scalar(2) * pa[q] * detail::box_sum(ts, y0, x0, y1, x1) +
                     pb[q] * detail::box_sum(tc, y0, x0, y1, x1);
        }
      }
    }
  }
  return total * inv_windows;
}

/// Mean structural similarity of two RGB batches, computed on luma.
template <typename Scalar>
Scalar ssim_index(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt, const SsimParams& params = {}) {
  require_same_shape(pred, gt, "ssim_index");
  return ssim_mean_plane(luma(pred), luma(gt), params, static_cast<Tensor<Scalar>*>(nullptr));
}

template <typename Scalar>
Scalar ssim_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt, const SsimParams& params = {}) {
  return Scalar(1) - ssim_index(pred, gt, params);
}

template <typename Scalar>
LossGrad<Scalar> ssim_loss_grad(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt, const SsimParams& params = {}) {
  require_same_shape(pred, gt, "ssim_loss");
  Tensor<Scalar> g_luma;
  const Scalar s = ssim_mean_plane(luma(pred), luma(gt), params, &g_luma);
  LossGrad<Scalar> out{Scalar(1) - s, Tensor<Scalar>::zeros_like(pred)};
  const Scalar weights[3] = {Scalar(kLumaR), Scalar(kLumaG), Scalar(kLumaB)};
  for (int ch = 0; ch < 3; ++ch) out.grad.data.row(ch) = -weights[ch] * g_luma.data.row(0);
  return out;
}

// --------------------------------------------------------------------------
// Conical HSV loss: mean |S'V'cos(H') - SVcos(H)| with H in radians.

template <typename Scalar>
Scalar conical_hsv_term(const Vec3<Scalar>& hsv) {
  return hsv[1] * hsv[2] * std::cos(hue_radians(hsv[0]));
}

template <typename Scalar>
Scalar hsv_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt) {
  require_same_shape(pred, gt, "hsv_loss");
  const Tensor<Scalar> hp = rgb_to_hsv(pred), hg = rgb_to_hsv(gt);
  Scalar total = 0;
  for (Eigen::Index p = 0; p < hp.pixels(); ++p) {
    total += std::abs(conical_hsv_term<Scalar>(hp.data.col(p)) - conical_hsv_term<Scalar>(hg.data.col(p)));
  }
  return total / Scalar(hp.pixels());
}

template <typename Scalar>
LossGrad<Scalar> hsv_loss_grad(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt) {
  require_same_shape(pred, gt, "hsv_loss");
  const Tensor<Scalar> hp = rgb_to_hsv(pred), hg = rgb_to_hsv(gt);
  Tensor<Scalar> g_hsv = Tensor<Scalar>::zeros_like(hp);
  Scalar total = 0;
  const Scalar inv = Scalar(1) / Scalar(hp.pixels());
  for (Eigen::Index p = 0; p < hp.pixels(); ++p) {
    const Scalar h = hp.data(0, p), s = hp.data(1, p), v = hp.data(2, p);
    const Scalar angle = hue_radians(h);
    const Scalar d = s * v * std::cos(angle) - conical_hsv_term<Scalar>(hg.data.col(p));
    total += std::abs(d);
    const Scalar sign = d > Scalar(0) ? Scalar(1) : (d < Scalar(0) ? Scalar(-1) : Scalar(0));
    g_hsv.data(0, p) = sign * inv * (-s * v * std::sin(angle)) * Scalar(2) * std::numbers::pi_v<Scalar>;
    g_hsv.data(1, p) = sign * inv * v * std::cos(angle);
    g_hsv.data(2, p) = sign * inv * s * std::cos(angle);
  }
  return {total * inv, rgb_to_hsv_backward(pred, g_hsv)};
}

// --------------------------------------------------------------------------
// Perceptual loss: mean squared feature distance, 1/(C H W) per image,
// averaged over the batch.

template <typename Scalar>
Scalar perceptual_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt, const FeatureExtractor<Scalar>& extractor) {
  require_same_shape(pred, gt, "perceptual_loss");
  if (!extractor.available()) return Scalar(0);
  const Tensor<Scalar> fp = extractor.features(pred), fg = extractor.features(gt);
  return (fp.data - fg.data).squaredNorm() / Scalar(fp.size());
}

template <typename Scalar>
LossGrad<Scalar> perceptual_loss_grad(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt,
                                      const FeatureExtractor<Scalar>& extractor) {
  require_same_shape(pred, gt, "perceptual_loss");
  if (!extractor.available()) return {Scalar(0), Tensor<Scalar>::zeros_like(pred)};
  const Tensor<Scalar> fp = extractor.features(pred), fg = extractor.features(gt);
  Tensor<Scalar> g = Tensor<Scalar>::zeros_like(fp);
  g.data = (fp.data - fg.data) * (Scalar(2) / Scalar(fp.size()));
  return {(fp.data - fg.data).squaredNorm() / Scalar(fp.size()), extractor.features_backward(pred, g)};
}

// --------------------------------------------------------------------------
// Total objective.

struct LossWeights {
  double w_l1 = 1.0;
  double w_ssim = 1.0;
  double w_hsv = 1.0;
  double w_perc = 0.5;
  double lambda_pixel_early = 0.5;
  double lambda_whole_early = 0.5;
  double lambda_pixel_late = 0.1;
  double lambda_whole_late = 0.9;
  int schedule_epoch = 20;

  /// (lambda_pixel, lambda_whole) for a zero-based epoch index.
  std::pair<double, double> lambdas(int epoch) const {
    return epoch < schedule_epoch ? std::pair{lambda_pixel_early, lambda_whole_early}
                                  : std::pair{lambda_pixel_late, lambda_whole_late};
  }
};

struct LossBreakdown {
  double total = 0;
  double l1_pixel = 0;
  double l1_whole = 0;
  double ssim_pixel = 0;
  double ssim_whole = 0;
  double hsv = 0;
  double perceptual = 0;
  double lambda_pixel = 0;
  double lambda_whole = 0;

  /// Fills lambdas and total from the component values.
  void compose(const LossWeights& w, int epoch) {
    std::tie(lambda_pixel, lambda_whole) = w.lambdas(epoch);
    total = lambda_pixel * (w.w_l1 * l1_pixel + w.w_ssim * ssim_pixel) +
            lambda_whole * (w.w_l1 * l1_whole + w.w_ssim * ssim_whole) + w.w_hsv * hsv + w.w_perc * perceptual;
  }
};

template <typename Scalar>
struct TotalLossGrad {
  LossBreakdown breakdown;
  Tensor<Scalar> grad_pixel;  // dL/d(pixel-block output)
  Tensor<Scalar> grad_final;  // dL/d(final output)
};

/// L1 and SSIM at both sites (pixel block with lambda_pixel, whole network
/// with lambda_whole); HSV and perceptual terms on the final output only.
template <typename Scalar>
TotalLossGrad<Scalar> total_loss_grad(const Tensor<Scalar>& pixel_out, const Tensor<Scalar>& final_out,
                                      const Tensor<Scalar>& gt, const LossWeights& w, int epoch,
                                      const FeatureExtractor<Scalar>& extractor, const SsimParams& ssim = {}) {
  require_same_shape(pixel_out, gt, "total_loss");
  require_same_shape(final_out, gt, "total_loss");
  TotalLossGrad<Scalar> out;
  LossBreakdown& b = out.breakdown;
  const auto [lp, lw] = w.lambdas(epoch);

  auto l1p = l1_loss_grad(pixel_out, gt);
  auto l1w = l1_loss_grad(final_out, gt);
  auto sp = ssim_loss_grad(pixel_out, gt, ssim);
  auto sw = ssim_loss_grad(final_out, gt, ssim);
  auto hv = hsv_loss_grad(final_out, gt);
  auto pc = perceptual_loss_grad(final_out, gt, extractor);
  b.l1_pixel = double(l1p.value);
  b.l1_whole = double(l1w.value);
  b.ssim_pixel = double(sp.value);
  b.ssim_whole = double(sw.value);
  b.hsv = double(hv.value);
  b.perceptual = double(pc.value);
  b.compose(w, epoch);

  out.grad_pixel = Tensor<Scalar>::zeros_like(gt);
  out.grad_pixel.data = Scalar(lp * w.w_l1) * l1p.grad.data + Scalar(lp * w.w_ssim) * sp.grad.data;
  out.grad_final = Tensor<Scalar>::zeros_like(gt);
  out.grad_final.data = Scalar(lw * w.w_l1) * l1w.grad.data + Scalar(lw * w.w_ssim) * sw.grad.data +
                        Scalar(w.w_hsv) * hv.grad.data + Scalar(w.w_perc) * pc.grad.data;
  return out;
}

template <typename Scalar>
LossBreakdown total_loss(const Tensor<Scalar>& pixel_out, const Tensor<Scalar>& final_out, const Tensor<Scalar>& gt,
                         const LossWeights& w, int epoch, const FeatureExtractor<Scalar>& extractor,
                         const SsimParams& ssim = {}) {
  require_same_shape(pixel_out, gt, "total_loss");
  require_same_shape(final_out, gt, "total_loss");
  LossBreakdown b;
  b.l1_pixel = double(l1_loss(pixel_out, gt));
  b.l1_whole = double(l1_loss(final_out, gt));
  b.ssim_pixel = double(ssim_loss(pixel_out, gt, ssim));
  b.ssim_whole = double(ssim_loss(final_out, gt, ssim));
  b.hsv = double(hsv_loss(final_out, gt));
  b.perceptual = double(perceptual_loss(final_out, gt, extractor));
  b.compose(w, epoch);
  return b;
}

}  // namespace uwe

#endif  // UWE_LOSSES_HPP
