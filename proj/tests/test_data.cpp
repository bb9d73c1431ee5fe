#include "test_util.hpp"
#include "uwe/data.hpp"

#include <doctest.h>

#include <fstream>
#include <set>

using namespace uwe;

TEST_CASE("load_pairs matching, warnings and ordering") {
  const auto root = test::scratch_dir("pairs");
  std::filesystem::create_directories(root / "raw");
  std::filesystem::create_directories(root / "reference");
  std::mt19937_64 rng(1);
  for (const char* id : {"c", "a", "b"}) {
    write_png(root / "raw" / (std::string(id) + ".png"), test::random_image(rng, 1, 4, 4));
    write_png(root / "reference" / (std::string(id) + ".png"), test::random_image(rng, 1, 4, 4));
  }
  SUBCASE("three pairs, sorted test split") {
    const auto ds = load_pairs(root, Split::test);
    REQUIRE(ds.size() == 3);
    CHECK(ds.entries[0].id == "a");
    CHECK(ds.entries[2].id == "c");
    CHECK(ds.warnings.empty());
    const auto s = ds.load(1);
    CHECK(s.raw.same_shape(s.reference));
    CHECK((s.raw.data.array() >= 0).all());
    CHECK((s.raw.data.array() <= 1).all());
  }
  SUBCASE("unmatched raw image is skipped with a warning") {
    std::filesystem::remove(root / "reference" / "b.png");
    const auto ds = load_pairs(root, Split::test);
    CHECK(ds.size() == 2);
    CHECK(ds.warnings.size() == 1);
  }
  SUBCASE("train shuffle is fixed by the seed") {
    for (int i = 0; i < 10; ++i) {
      const std::string id = "x" + std::to_string(i);
      write_png(root / "raw" / (id + ".png"), test::random_image(rng, 1, 2, 2));
      write_png(root / "reference" / (id + ".png"), test::random_image(rng, 1, 2, 2));
    }
    auto ids = [&](std::uint64_t seed) {
      std::vector<std::string> out;
      for (const auto& e : load_pairs(root, Split::train, seed).entries) out.push_back(e.id);
      return out;
    };
    CHECK(ids(5) == ids(5));
    CHECK(ids(5) != ids(6));
  }
  SUBCASE("empty split is an error") {
    const auto empty = test::scratch_dir("pairs_empty");
    std::filesystem::create_directories(empty / "raw");
    std::filesystem::create_directories(empty / "reference");
    CHECK_THROWS(load_pairs(empty, Split::train));
    CHECK_THROWS(load_pairs(empty / "missing", Split::train));
  }
}

TEST_CASE("split subdirectories are used when present") {
  const auto root = test::scratch_dir("pairs_split");
  write_toy_dataset(root / "test", {3, 16, 2, {"bluish"}});
  const auto ds = load_pairs(root, Split::test);
  CHECK(ds.size() == 3);
  CHECK(parse_split("train") == Split::train);
  CHECK_THROWS(parse_split("val"));
}

TEST_CASE("bilinear resize") {
  const auto c = Tensor<double>::constant(1, 3, 5, 7, 0.3);
  const auto r = resize_bilinear(c, 11, 4);
  CHECK(r.h == 11);
  CHECK(r.w == 4);
  CHECK((r.data.array() - 0.3).abs().maxCoeff() < 1e-15);
  std::mt19937_64 rng(1);
  const auto x = test::random_image(rng, 1, 6, 6);
  CHECK((resize_bilinear(x, 6, 6).data - x.data).cwiseAbs().maxCoeff() < 1e-15);
  // 2x downsampling averages 2x2 blocks.
  const auto d = resize_bilinear(x, 3, 3);
  CHECK(d(0, 1, 1, 1) == doctest::Approx((x(0, 1, 2, 2) + x(0, 1, 2, 3) + x(0, 1, 3, 2) + x(0, 1, 3, 3)) / 4));
}

TEST_CASE("train_transform geometry and pairing") {
  std::mt19937_64 rng(2);
  PairedSample s{test::random_image(rng, 1, 40, 52), Image{}, "p"};
  s.reference = s.raw;
  const auto t = train_transform(s, 7);
  CHECK(t.raw.h == 320);
  CHECK(t.raw.w == 320);
  CHECK(t.raw.data == t.reference.data);
  CHECK(train_transform(s, 7).raw.data == t.raw.data);

  // Offsets range over the whole valid grid.
  const TransformConfig small{12, 10};
  PairedSample g{Tensor<double>(1, 3, 12, 12), Image{}, "g"};
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) g.raw(0, 0, y, x) = (y * 12 + x) / 143.0;
  g.reference = g.raw;
  std::set<double> corners;
  for (std::uint64_t seed = 0; seed < 200; ++seed) corners.insert(train_transform(g, seed, small).raw(0, 0, 0, 0));
  CHECK(corners.size() == 9);

  // A per-pixel relation between raw and reference survives the shared crop.
  PairedSample rel{test::random_image(rng, 1, 30, 30, 0, 0.5), Image{}, "r"};
  rel.reference = rel.raw;
  rel.reference.data *= 2.0;
  const auto tr = train_transform(rel, 3, {30, 20});
  CHECK((tr.reference.data - 2.0 * tr.raw.data).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("degradation model") {
  std::mt19937_64 rng(3);
  const auto clean = test::random_image(rng, 1, 12, 10);
  SUBCASE("no attenuation and no haze is the identity") {
    DegradeParams p;
    p.seed = 9;
    CHECK(degrade(clean, p).data == clean.data);
  }
  SUBCASE("infinite attenuation with full haze returns the ambient colour") {
    DegradeParams p{{1e6, 1e6, 1e6}, 1.0, {0.1, 0.4, 0.7}, 1};
    const auto out = degrade(clean, p);
    for (int c = 0; c < 3; ++c) CHECK((out.data.row(c).array() - p.ambient[c]).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("bluish preset on white keeps blue above red") {
    auto p = preset("bluish");
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      p.seed = seed;
      const auto out = degrade(Tensor<double>::constant(1, 3, 9, 9, 1.0), p);
      CHECK((out.data.row(2).array() >= out.data.row(0).array()).all());
    }
  }
  SUBCASE("monotone in attenuation when ambient is darker than the scene") {
    DegradeParams lo{{0.2, 0.2, 0.2}, 0.5, {0.0, 0.0, 0.0}, 4};
    DegradeParams hi = lo;
    hi.attenuation = {0.8, 0.8, 0.8};
    const auto a = degrade(clean, lo), b = degrade(clean, hi);
    CHECK((b.data.array() <= a.data.array() + 1e-15).all());
  }
  SUBCASE("deterministic and in range") {
    auto p = preset("greenish");
    p.seed = 3;
    const auto a = degrade(clean, p);
    CHECK(degrade(clean, p).data == a.data);
    CHECK((a.data.array() >= 0).all());
    CHECK((a.data.array() <= 1).all());
  }
  CHECK(builtin_presets().size() == 4);
  CHECK_THROWS(preset("murky"));
}

TEST_CASE("depth ramp covers [kMinDepth, 1]") {
  double lo = 1, hi = 0;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      const double d = depth_at(y, x, 10, 10, 5);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  CHECK(lo == doctest::Approx(kMinDepth));
  CHECK(hi == doctest::Approx(1.0));
}

TEST_CASE("preset file parsing") {
  const auto dir = test::scratch_dir("presets");
  {
    std::ofstream f(dir / "p.ini");
    f << "# custom water\n[deep]\nattenuation = 3 1 0.5\nhaze_strength = 0.9\nambient = 0 0.2 0.5\n";
  }
  const auto table = load_presets(dir / "p.ini");
  const auto p = preset("deep", table);
  CHECK(p.attenuation[0] == 3);
  CHECK(p.haze_strength == 0.9);
  CHECK(p.ambient[2] == 0.5);
  {
    std::ofstream f(dir / "bad.ini");
    f << "[x]\ncolour = 1 2 3\n";
  }
  CHECK_THROWS(load_presets(dir / "bad.ini"));
}

TEST_CASE("toy dataset") {
  const auto root = test::scratch_dir("toy");
  write_toy_dataset(root, {4, 20, 3, {"bluish", "lowlight"}});
  const auto ds = load_pairs(root, Split::test);
  CHECK(ds.size() == 4);
  const auto s = ds.load(0);
  CHECK(s.raw.h == 20);
  CHECK(s.raw.data != s.reference.data);
  CHECK(synthetic_scene(5, 16, 16).data == synthetic_scene(5, 16, 16).data);
  CHECK(synthetic_scene(5, 16, 16).data != synthetic_scene(6, 16, 16).data);
}
