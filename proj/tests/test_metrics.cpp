#include "test_util.hpp"
#include "uwe/colorspace.hpp"
#include "uwe/metrics.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace uwe;

TEST_CASE("mse and psnr") {
  std::mt19937_64 rng(1);
  const auto a = test::random_image(rng, 1, 8, 8);
  const auto same = mse_psnr(a, a);
  CHECK(same.mse == 0);
  CHECK(same.psnr_db == kPsnrCapDb);

  Tensor<double> gt = Tensor<double>::constant(1, 3, 4, 4, 100.0 / 255);
  Tensor<double> pred = Tensor<double>::constant(1, 3, 4, 4, 116.0 / 255);
  const auto mp = mse_psnr(pred, gt);
  CHECK(mp.mse == doctest::Approx(256).epsilon(1e-12));
  CHECK(std::abs(mp.psnr_db - 24.0485) < 1e-3);

  const auto b = test::random_image(rng, 1, 8, 8);
  double s = 0;
  for (Eigen::Index i = 0; i < a.data.size(); ++i) {
    const double d = 255 * (a.data.data()[i] - b.data.data()[i]);
    s += d * d;
  }
  CHECK(std::abs(mse_psnr(a, b).mse - s / a.data.size()) < 1e-9);

  double prev = 1e9;
  for (double m : {1e-9, 1e-3, 1.0, 10.0, 1000.0}) {
    CHECK(psnr_from_mse(m) < prev);
    prev = psnr_from_mse(m);
  }
  CHECK(psnr_from_mse(5e-11) == kPsnrCapDb);
}

TEST_CASE("uciqe") {
  CHECK(uciqe(Tensor<double>::constant(1, 3, 16, 16, 0.5)) == doctest::Approx(0).epsilon(1e-12));
  CHECK(uciqe_score({1, 1, 1}) == doctest::Approx(1.0001).epsilon(1e-12));

  Tensor<double> flat = Tensor<double>::constant(1, 3, 16, 16, 0.5);
  Tensor<double> contrast = flat;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) contrast(0, c, y, x) = x < 8 ? 0.0 : 1.0;
  CHECK(uciqe(contrast) > uciqe(flat));
  const auto comp = uciqe_components(contrast);
  CHECK(comp.luminance_contrast == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("uiqm composition and degenerate images") {
  std::mt19937_64 rng(2);
  const auto img = test::random_image(rng, 1, 32, 32);
  const auto r = uiqm(img);
  CHECK(r.uiqm == 0.0282 * r.uicm + 0.2953 * r.uism + 3.5753 * r.uiconm);
  for (auto [u1, u2, u3] : {std::tuple{1.0, 2.0, 3.0}, std::tuple{-4.5, 0.25, 7.0}}) {
    CHECK(uiqm_combine(u1, u2, u3) == 0.0282 * u1 + 0.2953 * u2 + 3.5753 * u3);
  }
  const auto flat = Tensor<double>::constant(1, 3, 32, 32, 0.4);
  CHECK(uism(flat) == 0);
  CHECK(uiconm(flat) == 0);
}

TEST_CASE("uicm grows when saturation is boosted") {
  std::mt19937_64 rng(3);
  Tensor<double> img = test::random_image(rng, 1, 32, 32, 0.3, 0.6);
  Tensor<double> hsv = rgb_to_hsv(img);
  hsv.data.row(1) = (hsv.data.row(1) * 1.5).cwiseMin(1.0);
  const Tensor<double> boosted = hsv_to_rgb(hsv);
  CHECK(uicm(boosted) > uicm(img));
}

TEST_CASE("alpha-trimmed mean") {
  CHECK(alpha_trimmed_mean({1, 2, 3, 4, 5, 6, 7, 8, 9, 100}, 0.1, 0.1) == doctest::Approx(5.5));
  CHECK(alpha_trimmed_mean({}, 0.1, 0.1) == 0);
}

TEST_CASE("no-reference metrics are flip invariant on block-aligned images") {
  std::mt19937_64 rng(4);
  const auto img = test::random_image(rng, 1, 24, 32);
  const auto flipped = flip_horizontal(img);
  CHECK(uciqe(img) == doctest::Approx(uciqe(flipped)).epsilon(1e-12));
  const auto a = uiqm(img), b = uiqm(flipped);
  CHECK(a.uicm == doctest::Approx(b.uicm).epsilon(1e-12));
  CHECK(a.uism == doctest::Approx(b.uism).epsilon(1e-12));
  CHECK(a.uiconm == doctest::Approx(b.uiconm).epsilon(1e-12));
}

TEST_CASE("evaluate_dir") {
  const auto root = test::scratch_dir("metrics");
  std::filesystem::create_directories(root / "pred");
  std::filesystem::create_directories(root / "gt");
  std::filesystem::create_directories(root / "empty");
  const double levels[3] = {0, 8, 20};
  double expected_mse = 0;
  for (int i = 0; i < 3; ++i) {
    const auto gt = Tensor<double>::constant(1, 3, 16, 16, 100.0 / 255);
    const auto pred = Tensor<double>::constant(1, 3, 16, 16, (100.0 + levels[i]) / 255);
    write_png(root / "gt" / ("img" + std::to_string(i) + ".png"), gt);
    write_png(root / "pred" / ("img" + std::to_string(i) + ".png"), pred);
    expected_mse += levels[i] * levels[i] / 3;
  }

  SUBCASE("identical directories") {
    const auto r = evaluate_dir(root / "gt", root / "gt");
    CHECK(r.aggregated_rows == 3);
    CHECK(*r.aggregate.mse == 0);
    CHECK(*r.aggregate.ssim == doctest::Approx(1));
  }
  SUBCASE("aggregate is the mean of per-image values") {
    const auto r = evaluate_dir(root / "pred", root / "gt");
    REQUIRE(r.per_image.size() == 3);
    CHECK(*r.per_image[1].mse == doctest::Approx(64));
    CHECK(*r.aggregate.mse == doctest::Approx(expected_mse));
    const std::string csv = r.csv();
    CHECK(csv.rfind("image_id,mse,psnr_db,ssim,uciqe,uicm,uism,uiconm,uiqm,error\n", 0) == 0);
    CHECK(csv.find("\nAGGREGATE,") != std::string::npos);
  }
  SUBCASE("no reference directory leaves full-reference columns empty") {
    const auto r = evaluate_dir(root / "pred", std::nullopt);
    CHECK(!r.per_image[0].mse);
    CHECK(r.per_image[0].uiqm);
    CHECK(r.aggregated_rows == 3);
  }
  SUBCASE("missing counterpart becomes an error row") {
    std::filesystem::remove(root / "gt" / "img2.png");
    const auto r = evaluate_dir(root / "pred", root / "gt");
    CHECK(r.per_image[2].error == "missing reference image");
    CHECK(r.aggregated_rows == 2);
    CHECK(*r.aggregate.mse == doctest::Approx(32));
  }
  SUBCASE("unreadable file becomes an error row") {
    std::ofstream(root / "pred" / "zz_broken.png") << "not a png";
    const auto r = evaluate_dir(root / "pred", std::nullopt);
    CHECK(r.per_image.back().image_id == "zz_broken");
    CHECK(!r.per_image.back().error.empty());
  }
  SUBCASE("empty directory") {
    const auto r = evaluate_dir(root / "empty", std::nullopt);
    CHECK(r.per_image.empty());
    CHECK(r.aggregated_rows == 0);
    CHECK(r.aggregate.error == "no images aggregated");
    r.write_json(root / "empty.json");
    CHECK(std::filesystem::exists(root / "empty.json"));
  }
}
