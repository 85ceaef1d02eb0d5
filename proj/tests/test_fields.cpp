#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "coreg/fields.hpp"
#include "support.hpp"

using namespace coreg;
using coreg::test::random_field;
using coreg::test::random_image;
using coreg::test::field_away_from_crossings;
using coreg::test::oracle_sample;
using coreg::test::rel_err;

namespace {

Image two_by_two() { return Image(2, 2, {0, 1, 2, 3}); }

}  // namespace

TEST_CASE("bilinear_sample on a 2x2 image") {
  const Image img = two_by_two();
  CHECK(bilinear_sample(img, {0, 0}) == 0.0);
  CHECK(bilinear_sample(img, {0.5, 0.5}) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(bilinear_sample(img, {-5, 0}) == 0.0);
  CHECK(bilinear_sample(img, {1, 1}) == 3.0);
  CHECK(bilinear_sample(img, {9, 9}) == 3.0);
}

TEST_CASE("bilinear_sample rejects non-finite points") {
  const Image img = two_by_two();
  CHECK_THROWS_AS(bilinear_sample(img, {std::numeric_limits<double>::quiet_NaN(), 0}), std::invalid_argument);
  CHECK_THROWS_AS(bilinear_sample(img, {0, std::numeric_limits<double>::infinity()}), std::invalid_argument);
}

TEST_CASE("warp with a zero field is the identity") {
  const Image img = random_image(9, 7, 1);
  CHECK(warp_image(img, DisplacementField(9, 7)) == img);
}

TEST_CASE("warp of a constant image stays constant") {
  const Image img(8, 8, 0.3);
  const Image out = warp_image(img, random_field(8, 8, 5.0, 2));
  for (double v : out.values()) CHECK(v == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("uniform (0,1) field shifts a ramp left with a clamped last column") {
  Image ramp(4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) ramp.at(r, c) = 4 * r + c;
  const Image out = warp_image(ramp, DisplacementField::uniform(4, 4, 0.0, 1.0));
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) CHECK(out.at(r, c) == ramp.at(r, std::min(c + 1, 3)));
}

TEST_CASE("warp matches the per-pixel oracle on random 8x8 inputs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Image img = random_image(8, 8, seed);
    const DisplacementField f = random_field(8, 8, 4.0, seed + 100);
    const Image out = warp_image(img, f);
    double worst = 0.0;
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c)
        worst = std::max(worst, std::abs(out.at(r, c) - oracle_sample(img, r + f.row(r, c), c + f.col(r, c))));
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("warp output stays within the input range") {
  const Image img = random_image(16, 16, 3);
  const auto [lo, hi] = std::minmax_element(img.values().begin(), img.values().end());
  const Image out = warp_image(img, random_field(16, 16, 6.0, 4));
  for (double v : out.values()) {
    CHECK(v >= *lo);
    CHECK(v <= *hi);
  }
}

TEST_CASE("warp gradients match central differences") {
  const int n = 8;
  const Image img = random_image(n, n, 5);
  const Image weights = random_image(n, n, 6);
  const auto loss = [&](const Image& im, const DisplacementField& f) {
    const Image out = warp_image(im, f);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += weights.values()[i] * out.values()[i];
    return s;
  };
  const DisplacementField field = field_away_from_crossings(n, n, 1e-3, 7);
  const WarpGradients g = warp_image_backward(img, field, weights);
  const double h = 1e-5;

  SUBCASE("field") {
    DisplacementField probe = field;
    for (std::size_t i = 0; i < probe.values().size(); ++i) {
      const double keep = probe.values()[i];
      probe.values()[i] = keep + h;
      const double up = loss(img, probe);
      probe.values()[i] = keep - h;
      const double down = loss(img, probe);
      probe.values()[i] = keep;
      CHECK(rel_err(g.d_field.values()[i], (up - down) / (2 * h), 1e-6) <= 1e-4);
    }
  }
  SUBCASE("image") {
    Image probe = img;
    for (std::size_t i = 0; i < probe.size(); ++i) {
      const double keep = probe.values()[i];
      probe.values()[i] = keep + h;
      const double up = loss(probe, field);
      probe.values()[i] = keep - h;
      const double down = loss(probe, field);
      probe.values()[i] = keep;
      CHECK(rel_err(g.d_image.values()[i], (up - down) / (2 * h), 1e-6) <= 1e-4);
    }
  }
}

TEST_CASE("sample_field interpolates both components") {
  DisplacementField f(2, 2, {0, 10, 1, 11, 2, 12, 3, 13});
  const Coordinate d = sample_field(f, {0.5, 0.5});
  CHECK(d.row == doctest::Approx(1.5));
  CHECK(d.col == doctest::Approx(11.5));
}

TEST_CASE("spatial_gradient of a constant field is zero") {
  const FieldGradient g = spatial_gradient(DisplacementField::uniform(5, 6, 1.5, -2.0));
  for (double v : g.values()) CHECK(v == 0.0);
}

TEST_CASE("spatial_gradient of the row-index field") {
  DisplacementField f(4, 5);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 5; ++c) f.row(r, c) = r;
  const FieldGradient g = spatial_gradient(f);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 5; ++c) {
      CHECK(g.at(r, c, 0, 0) == (r < 3 ? 1.0 : 0.0));
      CHECK(g.at(r, c, 0, 1) == 0.0);
      CHECK(g.at(r, c, 1, 0) == 0.0);
      CHECK(g.at(r, c, 1, 1) == 0.0);
    }
  }
}

TEST_CASE("spatial_gradient on a 2x2 field, enumerated") {
  // Row component [[a,b],[c,d]] = [[1,2],[4,8]]; col component [[0,3],[5,6]].
  DisplacementField f(2, 2, {1, 0, 2, 3, 4, 5, 8, 6});
  const FieldGradient g = spatial_gradient(f);
  CHECK(g.at(0, 0, 0, 0) == 3.0);  // c - a
  CHECK(g.at(0, 0, 0, 1) == 1.0);  // b - a
  CHECK(g.at(0, 1, 0, 0) == 6.0);  // d - b
  CHECK(g.at(0, 1, 0, 1) == 0.0);
  CHECK(g.at(1, 0, 0, 0) == 0.0);
  CHECK(g.at(1, 0, 0, 1) == 4.0);  // d - c
  CHECK(g.at(0, 0, 1, 0) == 5.0);
  CHECK(g.at(0, 0, 1, 1) == 3.0);
  CHECK(g.at(1, 1, 0, 0) == 0.0);
  CHECK(g.at(1, 1, 1, 1) == 0.0);
}

TEST_CASE("spatial_gradient of an affine field is constant on the interior") {
  DisplacementField f(6, 7);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 7; ++c) {
      f.row(r, c) = 0.5 * r - 1.25 * c + 3.0;
      f.col(r, c) = -2.0 * r + 0.75 * c;
    }
  }
  const FieldGradient g = spatial_gradient(f);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 6; ++c) {
      CHECK(g.at(r, c, 0, 0) == doctest::Approx(0.5));
      CHECK(g.at(r, c, 0, 1) == doctest::Approx(-1.25));
      CHECK(g.at(r, c, 1, 0) == doctest::Approx(-2.0));
      CHECK(g.at(r, c, 1, 1) == doctest::Approx(0.75));
    }
  }
}

TEST_CASE("spatial_gradient_backward is the adjoint") {
  const DisplacementField x = random_field(6, 5, 1.0, 11);
  const FieldGradient gx = spatial_gradient(x);
  FieldGradient y(6, 5);
  Rng rng(12);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 5; ++c)
      for (int k = 0; k < 2; ++k)
        for (int a = 0; a < 2; ++a) y.at(r, c, k, a) = rng.uniform(-1, 1);
  const DisplacementField gty = spatial_gradient_backward(y);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < gx.values().size(); ++i) lhs += gx.values()[i] * y.values()[i];
  for (std::size_t i = 0; i < x.values().size(); ++i) rhs += x.values()[i] * gty.values()[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

namespace {

Image disk_image(int n, double cr, double cc, double radius) {
  Image img(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) img.at(r, c) = std::hypot(r - cr, c - cc) <= radius ? 1.0 : 0.0;
  return img;
}

// Brute-force signed distance: boundary = foreground pixels with a
// 4-neighbour in the background.
double brute_signed_distance(const Image& img, int r, int c) {
  const auto fg = [&](int y, int x) { return img.at(y, x) >= 0.5; };
  double best = std::numeric_limits<double>::infinity();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (!fg(y, x)) continue;
      const bool edge = (y > 0 && !fg(y - 1, x)) || (y + 1 < img.height() && !fg(y + 1, x)) ||
                        (x > 0 && !fg(y, x - 1)) || (x + 1 < img.width() && !fg(y, x + 1));
      if (edge) best = std::min(best, std::hypot(y - r, x - c));
    }
  }
  return fg(r, c) ? -best : best;
}

}  // namespace

TEST_CASE("signed distance: boundary pixels map to 0.5") {
  const Image img = disk_image(40, 20, 20, 12);
  const Image sd = to_signed_distance(img, 0.5);
  CHECK(sd.at(8, 20) == 0.5);  // top of the disk
  CHECK(sd.at(20, 32) == 0.5);
}

TEST_CASE("signed distance matches brute force") {
  const Image img = disk_image(40, 20, 20, 12);
  const Image sd = to_signed_distance(img, 0.5);
  SUBCASE("three pixels inside a straight edge") {
    Image box(40, 40, 0.0);
    for (int r = 10; r < 30; ++r)
      for (int c = 5; c < 35; ++c) box.at(r, c) = 1.0;
    const double d = brute_signed_distance(box, 13, 20);
    CHECK(d == -3.0);
    CHECK(to_signed_distance(box, 0.5).at(13, 20) == doctest::Approx(7.0 / 20.0).epsilon(1e-12));
  }
  SUBCASE("every pixel") {
    for (int r = 0; r < 40; ++r) {
      for (int c = 0; c < 40; ++c) {
        const double d = std::clamp(brute_signed_distance(img, r, c), -10.0, 10.0);
        CHECK(sd.at(r, c) == doctest::Approx((d + 10.0) / 20.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("signed distance needs a boundary") {
  CHECK_THROWS_AS(to_signed_distance(Image(8, 8, 1.0), 0.5), std::invalid_argument);
  CHECK_THROWS_AS(to_signed_distance(Image(8, 8, 0.0), 0.5), std::invalid_argument);
}

TEST_CASE("squared distance transform matches brute force on random seeds") {
  Rng rng(21);
  const int h = 13, w = 17;
  std::vector<bool> seeds(h * w);
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = rng.uniform() < 0.08;
  seeds[5] = true;
  const auto dt = squared_distance_transform(h, w, seeds);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < h * w; ++i)
        if (seeds[i]) best = std::min(best, double((i / w - r) * (i / w - r) + (i % w - c) * (i % w - c)));
      CHECK(dt[r * w + c] == best);
    }
  }
}

TEST_CASE("raw format round trip and header layout") {
  const auto dir = std::filesystem::temp_directory_path() / "coreg_test_raw";
  std::filesystem::create_directories(dir);
  const Image img = random_image(3, 5, 31);
  save_image(dir / "img.raw", img);
  const Image back = load_image(dir / "img.raw");
  REQUIRE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back.values()[i] == static_cast<float>(img.values()[i]));

  std::ifstream in(dir / "img.raw", std::ios::binary);
  unsigned char header[16];
  in.read(reinterpret_cast<char*>(header), 16);
  CHECK(std::memcmp(header, "CRFD", 4) == 0);
  CHECK(header[4] == 3);
  CHECK(header[8] == 5);
  CHECK(header[12] == 1);
  CHECK(std::filesystem::file_size(dir / "img.raw") == 16 + 4 * 15);

  const DisplacementField f = random_field(4, 4, 2.0, 32);
  save_field(dir / "f.raw", f);
  CHECK(load_field(dir / "f.raw").same_shape(f));
  CHECK_THROWS_AS(load_image(dir / "f.raw"), IoError);

  std::ofstream(dir / "bad.raw") << "nope";
  CHECK_THROWS_AS(load_image(dir / "bad.raw"), IoError);
  CHECK_THROWS_AS(load_image(dir / "missing.raw"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("PNG export writes a PNG signature") {
  const auto path = std::filesystem::temp_directory_path() / "coreg_test.png";
  write_png(path, random_image(10, 12, 41));
  std::ifstream in(path, std::ios::binary);
  char sig[8];
  in.read(sig, 8);
  CHECK(std::memcmp(sig, "\x89PNG\r\n\x1a\n", 8) == 0);
  std::filesystem::remove(path);
}

TEST_CASE("images reject bad shapes and non-finite values") {
  CHECK_THROWS_AS(Image(1, 5), std::invalid_argument);
  CHECK_THROWS_AS(Image(2, 2, {0, 1, 2, std::numeric_limits<double>::quiet_NaN()}), std::invalid_argument);
  CHECK_THROWS_AS(warp_image(Image(4, 4), DisplacementField(4, 5)), std::invalid_argument);
}
