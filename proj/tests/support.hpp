#pragma once

#include <algorithm>
#include <cmath>

#include "coreg/image.hpp"
#include "coreg/random.hpp"

namespace coreg::test {

inline Image random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w);
  for (double& v : img.values()) v = rng.uniform();
  return img;
}

inline DisplacementField random_field(int h, int w, double scale, std::uint64_t seed) {
  Rng rng(seed);
  DisplacementField f(h, w);
  for (double& v : f.values()) v = rng.uniform(-scale, scale);
  return f;
}

// Independent bilinear reference: clamp, then weight the four neighbours
// explicitly (no shared stencil code with the library).
inline double oracle_sample(const Image& img, double r, double c) {
  r = std::min(std::max(r, 0.0), img.height() - 1.0);
  c = std::min(std::max(c, 0.0), img.width() - 1.0);
  double sum = 0.0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double wy = std::max(0.0, 1.0 - std::abs(r - y));
      const double wx = std::max(0.0, 1.0 - std::abs(c - x));
      sum += wy * wx * img.at(y, x);
    }
  }
  return sum;
}

// Field whose sample points x + field(x) stay at least `margin` away from
// integer coordinates and inside the image.
inline DisplacementField field_away_from_crossings(int h, int w, double margin, std::uint64_t seed) {
  Rng rng(seed);
  DisplacementField f(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto pick = [&](int base, int size) {
        double p;
        do {
          p = rng.uniform(0.0, size - 1.0);
        } while (std::abs(p - std::round(p)) < margin);
        return p - base;
      };
      f.row(r, c) = pick(r, h);
      f.col(r, c) = pick(c, w);
    }
  }
  return f;
}

/// |a - b| relative to the larger magnitude, with an absolute floor for values near zero.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace coreg::test
