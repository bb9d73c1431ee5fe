#include "test_util.hpp"
#include "uwe/colorspace.hpp"
#include "uwe/harness.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace uwe;

namespace {

Vec3<double> to_hsv(double r, double g, double b) { return rgb_to_hsv_pixel<double>(Vec3<double>(r, g, b)); }
Vec3<double> to_rgb(double h, double s, double v) { return hsv_to_rgb_pixel<double>(Vec3<double>(h, s, v)); }

// Textbook sector formula, used as an independent reference for hsv_to_rgb.
Vec3<double> sector_hsv_to_rgb(double h, double s, double v) {
  const double hd = h * 6.0;
  const int i = static_cast<int>(std::floor(hd)) % 6;
  const double f = hd - std::floor(hd);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

}  // namespace

TEST_CASE("rgb_to_hsv reference pixels") {
  CHECK((to_hsv(1, 0, 0) - Vec3<double>(0, 1, 1)).norm() == doctest::Approx(0));
  CHECK((to_hsv(0.25, 0.25, 0.25) - Vec3<double>(0, 0, 0.25)).norm() == doctest::Approx(0));
  CHECK((to_hsv(0, 0.5, 0.5) - Vec3<double>(0.5, 1, 0.5)).norm() == doctest::Approx(0).epsilon(1e-12));
  CHECK(to_hsv(0, 0, 1)[0] == doctest::Approx(240.0 / 360));
  CHECK(to_hsv(0, 1, 0)[0] == doctest::Approx(120.0 / 360));
  // Negative intermediate hue (max red, blue above green) wraps once.
  CHECK(to_hsv(1, 0, 0.5)[0] == doctest::Approx(330.0 / 360));
}

TEST_CASE("rgb_to_hsv black and achromatic pixels") {
  const auto black = to_hsv(0, 0, 0);
  CHECK(black[0] == 0);
  CHECK(black[1] == 0);
  CHECK(black[2] == 0);
  Mat3<double> jac;
  rgb_to_hsv_pixel<double>(Vec3<double>(0.4, 0.4, 0.4), &jac);
  CHECK(jac.row(0).isZero());
}

TEST_CASE("max-channel ties resolve by R > G > B") {
  Mat3<double> jac;
  rgb_to_hsv_pixel<double>(Vec3<double>(0.8, 0.8, 0.2), &jac);
  CHECK(jac(2, 0) == 1);
  CHECK(jac(2, 1) == 0);
  rgb_to_hsv_pixel<double>(Vec3<double>(0.3, 0.9, 0.9), &jac);
  CHECK(jac(2, 1) == 1);
  CHECK(jac(2, 2) == 0);
}

TEST_CASE("hsv_to_rgb reference pixels") {
  for (double h : {0.0, 0.3, 0.77}) {
    CHECK((to_rgb(h, 0, 0.7) - Vec3<double>(0.7, 0.7, 0.7)).norm() == doctest::Approx(0));
  }
  CHECK((to_rgb(0, 1, 1) - Vec3<double>(1, 0, 0)).norm() == doctest::Approx(0));
  CHECK((to_rgb(1.0 / 3, 1, 1) - Vec3<double>(0, 1, 0)).norm() == doctest::Approx(0).epsilon(1e-12));
  CHECK((to_rgb(2.0 / 3, 1, 1) - Vec3<double>(0, 0, 1)).norm() == doctest::Approx(0).epsilon(1e-12));
}

TEST_CASE("hsv_to_rgb agrees with the sector formula") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  for (int i = 0; i < 20000; ++i) {
    const double h = u(rng) * 0.999999, s = u(rng), v = u(rng);
    worst = std::max(worst, (to_rgb(h, s, v) - sector_hsv_to_rgb(h, s, v)).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("round trip over the 52^3 grid") {
  double worst = 0;
  for (int r = 0; r < 52; ++r)
    for (int g = 0; g < 52; ++g)
      for (int b = 0; b < 52; ++b) {
        const Vec3<double> x(r / 51.0, g / 51.0, b / 51.0);
        const Vec3<double> y = hsv_to_rgb_pixel<double>(rgb_to_hsv_pixel<double>(x));
        worst = std::max(worst, (x - y).cwiseAbs().maxCoeff());
      }
  CHECK(worst <= 1e-5);
}

TEST_CASE("outputs stay in range and hue never reaches 1") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 20000; ++i) {
    const Vec3<double> x(u(rng), u(rng), u(rng));
    const auto hsv = rgb_to_hsv_pixel<double>(x);
    CHECK((hsv.array() >= 0).all());
    CHECK(hsv[0] < 1);
    CHECK(hsv[1] <= 1);
    const auto rgb = hsv_to_rgb_pixel<double>(Vec3<double>(u(rng), u(rng), u(rng)));
    CHECK(((rgb.array() >= 0) && (rgb.array() <= 1)).all());
  }
  // Smallest negative hue offset would round up to 360 degrees.
  const double tiny = std::numeric_limits<double>::epsilon();
  CHECK(to_hsv(1, 0, tiny)[0] < 1);
}

TEST_CASE("input domain checks") {
  CHECK_THROWS_AS(rgb_to_hsv(test::pixel(1.1, 0, 0)), DomainError);
  CHECK_THROWS_AS(rgb_to_hsv(test::pixel(-0.01, 0, 0)), DomainError);
  CHECK_THROWS_AS(rgb_to_hsv(test::pixel(std::nan(""), 0, 0)), DomainError);
  CHECK_THROWS_AS(hsv_to_rgb(test::pixel(0, std::numeric_limits<double>::infinity(), 0)), DomainError);
  CHECK_NOTHROW(rgb_to_hsv(test::pixel(1 + 5e-7, 0, -5e-7)));
}

TEST_CASE("batched backward equals per-pixel Jacobian products") {
  std::mt19937_64 rng(5);
  const auto rgb = test::random_image(rng, 2, 3, 4);
  const auto g = test::random_image(rng, 2, 3, 4, -1, 1);
  const auto grad = rgb_to_hsv_backward(rgb, g);
  Mat3<double> jac;
  for (Eigen::Index p = 0; p < rgb.pixels(); ++p) {
    rgb_to_hsv_pixel<double>(rgb.data.col(p), &jac);
    CHECK((grad.data.col(p) - jac.transpose() * g.data.col(p)).norm() < 1e-14);
  }
}

TEST_CASE("colorspace Jacobians match finite differences") {
  const auto r = gradcheck_colorspace(7, 1000);
  INFO(r.summary());
  CHECK(r.passed());
}
