#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "coreg/synth.hpp"

using namespace coreg;

TEST_CASE("linear box-bump landmarks") {
  SUBCASE("t = 0.5 centres the bump") {
    const ShapeSample s = make_linear_boxbump(0.5);
    REQUIRE(s.landmarks.size() == 7);
    CHECK(s.landmarks[0].row == 19.0);
    CHECK(s.landmarks[0].col == 32.0);
    CHECK(s.landmarks[1].col == 27.0);
    CHECK(s.landmarks[2].col == 37.0);
    CHECK(s.landmarks[1].row == 24.0);
  }
  SUBCASE("t = 0 puts the bump at column 16") {
    const ShapeSample s = make_linear_boxbump(0.0);
    CHECK(s.landmarks[0].col == 16.0);
    CHECK(s.param == 0.0);
    CHECK(s.family == ShapeFamily::linear);
  }
  SUBCASE("rectangle corners") {
    const ShapeSample s = make_linear_boxbump(0.3);
    CHECK(s.landmarks[3].row == 24.0);
    CHECK(s.landmarks[3].col == 8.0);
    CHECK(s.landmarks[6].row == 44.0);
    CHECK(s.landmarks[6].col == 56.0);
  }
}

TEST_CASE("linear box-bump rasterisation") {
  const ShapeSample s = make_linear_boxbump(0.5);
  CHECK(s.image.height() == 64);
  CHECK(s.image.width() == 64);
  CHECK(s.image.at(34, 32) == 1.0);
  CHECK(s.image.at(5, 5) == 0.0);
  CHECK(s.image.at(21, 32) == 1.0);  // inside the bump
  CHECK(s.image.at(21, 50) == 0.0);  // above the rectangle, away from the bump
  for (double v : s.image.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("box-bump parameters are range-checked") {
  CHECK_THROWS_AS(make_linear_boxbump(-0.01), std::invalid_argument);
  CHECK_THROWS_AS(make_linear_boxbump(1.01), std::invalid_argument);
  CHECK_THROWS_AS(make_rotating_boxbump(50.5), std::invalid_argument);
  CHECK_THROWS_AS(make_rotating_boxbump(-51), std::invalid_argument);
}

TEST_CASE("rotating box-bump") {
  SUBCASE("theta = 0 apex") {
    const ShapeSample s = make_rotating_boxbump(0.0);
    REQUIRE(s.landmarks.size() == 3);
    CHECK(s.landmarks[0].row == doctest::Approx(15.0).epsilon(1e-14));
    CHECK(s.landmarks[0].col == doctest::Approx(32.0).epsilon(1e-14));
  }
  SUBCASE("theta = 0 is mirror symmetric about column 32") {
    const Image img = make_rotating_boxbump(0.0).image;
    for (int r = 0; r < 64; ++r)
      for (int c = 1; c < 64; ++c) CHECK(std::abs(img.at(r, c) - img.at(r, 64 - c)) <= 1e-12);
  }
  SUBCASE("disk centre is fully covered") { CHECK(make_rotating_boxbump(20.0).image.at(36, 32) == 1.0); }
  SUBCASE("bases lie on the disk at theta -+ asin(r/R)") {
    const double theta = 30.0;
    const ShapeSample s = make_rotating_boxbump(theta);
    const double pi = std::acos(-1.0);
    const double delta = std::asin(5.0 / 16.0);
    const double a = theta * pi / 180.0;
    CHECK(s.landmarks[1].row == doctest::Approx(36.0 - 16.0 * std::cos(a - delta)));
    CHECK(s.landmarks[1].col == doctest::Approx(32.0 + 16.0 * std::sin(a - delta)));
    CHECK(s.landmarks[2].row == doctest::Approx(36.0 - 16.0 * std::cos(a + delta)));
    CHECK(s.landmarks[2].col == doctest::Approx(32.0 + 16.0 * std::sin(a + delta)));
  }
  SUBCASE("positive theta moves the bump clockwise (to the right)") {
    CHECK(make_rotating_boxbump(40.0).landmarks[0].col > 32.0);
  }
}

TEST_CASE("linear landmark displacement is a horizontal bump shift") {
  const ShapeSample a = make_linear_boxbump(0.2), b = make_linear_boxbump(0.9);
  const double shift = boxbump::bump_column(0.9) - boxbump::bump_column(0.2);
  for (int k = 0; k < 3; ++k) {
    CHECK(b.landmarks[k].row == a.landmarks[k].row);
    CHECK(b.landmarks[k].col - a.landmarks[k].col == doctest::Approx(shift));
  }
  for (int k = 3; k < 7; ++k) CHECK(b.landmarks[k] == a.landmarks[k]);
}

TEST_CASE("foreground area is nearly constant across each family") {
  for (ShapeFamily family : {ShapeFamily::linear, ShapeFamily::rotating}) {
    double lo = 1e300, hi = 0.0;
    for (int i = 0; i < 21; ++i) {
      double area = 0.0;
      for (double v : make_boxbump(family, family_param(family, i, 21)).image.values()) area += v;
      lo = std::min(lo, area);
      hi = std::max(hi, area);
    }
    CHECK((hi - lo) / hi < 0.01);
  }
}

TEST_CASE("pair dataset sizes") {
  SUBCASE("100 shapes") {
    const PairDataset d = build_pair_dataset(ShapeFamily::linear, 100, 3);
    CHECK(d.train.size() + d.test.size() == 9900);
    CHECK(d.test.size() == 2475);
    CHECK(d.bump_width == 10.0);
  }
  SUBCASE("2 shapes") {
    const PairDataset d = build_pair_dataset(ShapeFamily::rotating, 2, 3);
    CHECK(d.train.size() + d.test.size() == 2);
    CHECK(d.test.size() == 1);
  }
  SUBCASE("train truncation") {
    const PairDataset d = build_pair_dataset(ShapeFamily::linear, 10, 3, 7);
    CHECK(d.train.size() == 7);
  }
  CHECK_THROWS_AS(build_pair_dataset(ShapeFamily::linear, 1, 0), std::invalid_argument);
}

TEST_CASE("pair dataset is deterministic, disjoint and proper") {
  const PairDataset a = build_pair_dataset(ShapeFamily::linear, 12, 9);
  const PairDataset b = build_pair_dataset(ShapeFamily::linear, 12, 9);
  const PairDataset c = build_pair_dataset(ShapeFamily::linear, 12, 10);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.test != c.test);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto* split : {&a.train, &a.test}) {
    for (const auto& p : *split) {
      CHECK(p.source != p.target);
      CHECK(a.source(p).param != a.target(p).param);
      CHECK(seen.insert({p.source, p.target}).second);
    }
  }
  CHECK(seen.size() == 12 * 11);
}

TEST_CASE("uniformly spaced parameters") {
  CHECK(family_param(ShapeFamily::linear, 0, 5) == 0.0);
  CHECK(family_param(ShapeFamily::linear, 4, 5) == 1.0);
  CHECK(family_param(ShapeFamily::rotating, 0, 101) == -50.0);
  CHECK(family_param(ShapeFamily::rotating, 50, 101) == doctest::Approx(0.0));
  CHECK(centered_param(ShapeFamily::linear) == 0.5);
  CHECK(centered_param(ShapeFamily::rotating) == 0.0);
}

TEST_CASE("dataset cache round trip") {
  const auto root = std::filesystem::temp_directory_path() / "coreg_test_cache";
  std::filesystem::remove_all(root);
  const PairDataset built = load_or_build_dataset(root, ShapeFamily::rotating, 5, 4);
  CHECK(std::filesystem::exists(root / dataset_cache_key(ShapeFamily::rotating, 5, 4) / "manifest.csv"));
  const PairDataset loaded = load_or_build_dataset(root, ShapeFamily::rotating, 5, 4);
  CHECK(loaded.train == built.train);
  CHECK(loaded.test == built.test);
  REQUIRE(loaded.samples.size() == built.samples.size());
  for (std::size_t i = 0; i < built.samples.size(); ++i) {
    CHECK(loaded.samples[i].param == doctest::Approx(built.samples[i].param).epsilon(1e-12));
    REQUIRE(loaded.samples[i].landmarks.size() == built.samples[i].landmarks.size());
    for (std::size_t k = 0; k < built.samples[i].landmarks.size(); ++k) {
      CHECK(loaded.samples[i].landmarks[k].row == doctest::Approx(built.samples[i].landmarks[k].row).epsilon(1e-12));
    }
    for (std::size_t p = 0; p < built.samples[i].image.size(); ++p) {
      CHECK(loaded.samples[i].image.values()[p] == static_cast<float>(built.samples[i].image.values()[p]));
    }
  }
  CHECK(dataset_cache_key(ShapeFamily::linear, 100, 7) == "linear_n100_seed7");
  std::filesystem::remove_all(root);
}
