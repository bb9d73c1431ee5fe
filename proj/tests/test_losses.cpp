#include "loss_oracles.hpp"
#include "test_util.hpp"
#include "uwe/features.hpp"
#include "uwe/harness.hpp"
#include "uwe/losses.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace uwe;
using namespace uwe::oracle;

TEST_CASE("l1 loss") {
  std::mt19937_64 rng(1);
  const auto a = test::random_image(rng, 1, 8, 8, 0, 0.9);
  CHECK(l1_loss(a, a) == 0);
  Tensor<double> b = a;
  b.data.array() += 0.1;
  CHECK(l1_loss(b, a) == doctest::Approx(0.1).epsilon(1e-12));
  const auto c = test::random_image(rng, 1, 8, 8);
  CHECK(l1_loss(a, c) == doctest::Approx(l1_oracle(a, c)).epsilon(1e-6));
  CHECK_THROWS_AS(l1_loss(a, test::random_image(rng, 1, 8, 9)), ShapeError);
}

TEST_CASE("ssim loss against the window oracle and closed forms") {
  std::mt19937_64 rng(2);
  const auto a = test::random_image(rng, 2, 16, 16);
  const auto b = test::random_image(rng, 2, 16, 16);
  CHECK(ssim_loss(a, a) == doctest::Approx(0).epsilon(1e-12));
  CHECK(std::abs(ssim_index(a, b) - ssim_oracle(a, b)) < 1e-5);
  CHECK(std::abs(ssim_index(a, b) - ssim_index(b, a)) < 1e-12);
  CHECK(std::abs(ssim_index(a, b) - (1 - ssim_loss(a, b))) < 1e-12);

  const double ca = 0.3, cb = 0.7;
  const auto A = Tensor<double>::constant(1, 3, 12, 12, ca);
  const auto B = Tensor<double>::constant(1, 3, 12, 12, cb);
  CHECK(ssim_loss(A, B) == doctest::Approx(1 - (2 * ca * cb + 0.02) / (ca * ca + cb * cb + 0.02)).epsilon(1e-12));

  const double l = ssim_loss(a, test::random_image(rng, 2, 16, 16));
  CHECK(l >= 0);
  CHECK(l <= 2);
  CHECK_THROWS_AS(ssim_loss(test::random_image(rng, 1, 10, 20), test::random_image(rng, 1, 10, 20)), ShapeError);
}

TEST_CASE("ssim of an inverted checkerboard is negative") {
  Tensor<double> a(1, 3, 11, 11), b(1, 3, 11, 11);
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 11; ++x)
      for (int c = 0; c < 3; ++c) {
        a(0, c, y, x) = (x + y) % 2;
        b(0, c, y, x) = 1 - a(0, c, y, x);
      }
  CHECK(ssim_index(a, b) < 0);
  CHECK(ssim_index(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-9));
}

TEST_CASE("hsv loss") {
  std::mt19937_64 rng(3);
  const auto a = test::random_image(rng, 1, 16, 16);
  const auto b = test::random_image(rng, 1, 16, 16);
  CHECK(hsv_loss(a, a) == 0);
  CHECK(std::abs(hsv_loss(a, b) - hsv_oracle(a, b)) < 1e-5);
  // Gray pixels carry no conical component whatever their hue.
  CHECK(hsv_loss(test::pixel(0.3, 0.3, 0.3), test::pixel(0.8, 0.8, 0.8)) == 0);
  // Red (hue 0) vs cyan (hue pi), S = V = 1.
  CHECK(hsv_loss(test::pixel(1, 0, 0), test::pixel(0, 1, 1)) == doctest::Approx(2).epsilon(1e-12));
}

TEST_CASE("perceptual loss") {
  std::mt19937_64 rng(4);
  const auto a = test::random_image(rng, 1, 16, 16);
  const auto b = test::random_image(rng, 1, 16, 16);
  const auto ex = make_random_extractor<double>(17);
  CHECK(perceptual_loss(a, a, *ex) == 0);
  CHECK(std::abs(perceptual_loss(a, b, *ex) - perceptual_oracle(a, b, *ex)) < 1e-6);
  IdentityExtractor<double> id;
  CHECK(perceptual_loss(a, b, id) == doctest::Approx((a.data - b.data).squaredNorm() / a.size()).epsilon(1e-12));
  UnavailableExtractor<double> none("test");
  CHECK(perceptual_loss(a, b, none) == 0);
  CHECK(perceptual_loss_grad(a, b, none).grad.data.isZero());
}

TEST_CASE("loss weights and breakdown arithmetic") {
  const LossWeights w;
  CHECK(w.lambdas(0) == std::pair{0.5, 0.5});
  CHECK(w.lambdas(19) == std::pair{0.5, 0.5});
  CHECK(w.lambdas(20) == std::pair{0.1, 0.9});
  for (int e = 0; e < 50; ++e) CHECK(w.lambdas(e).first + w.lambdas(e).second == doctest::Approx(1));

  LossBreakdown b;
  b.l1_pixel = 0.1;
  b.l1_whole = 0.2;
  b.ssim_pixel = 0.3;
  b.ssim_whole = 0.4;
  b.hsv = 0.5;
  b.perceptual = 0.6;
  b.compose(w, 0);
  CHECK(b.total == 0.5 * (0.1 + 0.3) + 0.5 * (0.2 + 0.4) + 1.0 * 0.5 + 0.5 * 0.6);
  CHECK(b.total == doctest::Approx(1.3).epsilon(1e-15));
}

TEST_CASE("total loss vanishes on identical inputs and switches schedule") {
  std::mt19937_64 rng(5);
  const auto gt = test::random_image(rng, 1, 16, 16);
  const auto ex = make_random_extractor<double>(3);
  const LossWeights w;
  CHECK(total_loss(gt, gt, gt, w, 0, *ex).total == doctest::Approx(0).epsilon(1e-12));
  const auto p = test::random_image(rng, 1, 16, 16);
  const auto e5 = total_loss(p, p, gt, w, 5, *ex);
  const auto e30 = total_loss(p, p, gt, w, 30, *ex);
  CHECK(e5.lambda_pixel == 0.5);
  CHECK(e30.lambda_pixel == 0.1);
  CHECK(e30.lambda_whole == 0.9);
  CHECK(e5.l1_pixel == e30.l1_pixel);
  const auto tl = total_loss_grad(p, p, gt, w, 5, *ex);
  CHECK(tl.breakdown.total == doctest::Approx(e5.total).epsilon(1e-12));
}

TEST_CASE("total loss gradients match finite differences") {
  const auto r = gradcheck_losses(2, 40, 16);
  INFO(r.summary());
  CHECK(r.passed());
}
