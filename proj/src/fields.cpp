#include "coreg/fields.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace coreg {

namespace {

struct Stencil {
  int r0, c0;
  double fr, fc;
  bool row_clamped, col_clamped;
};

// The bottom-right cell is used for coordinates on the last row/column so that
// r0 + 1 stays in range.
Stencil make_stencil(int height, int width, Coordinate p) {
  if (!std::isfinite(p.row) || !std::isfinite(p.col)) {
    throw std::invalid_argument("bilinear_sample: non-finite coordinate");
  }
  const double max_r = height - 1;
  const double max_c = width - 1;
  Stencil s{};
  s.row_clamped = p.row < 0.0 || p.row > max_r;
  s.col_clamped = p.col < 0.0 || p.col > max_c;
  const double r = std::clamp(p.row, 0.0, max_r);
  const double c = std::clamp(p.col, 0.0, max_c);
  s.r0 = std::min(static_cast<int>(std::floor(r)), height - 2);
  s.c0 = std::min(static_cast<int>(std::floor(c)), width - 2);
  s.fr = r - s.r0;
  s.fc = c - s.c0;
  return s;
}

}  // namespace

double bilinear_sample(const Image& image, Coordinate point) {
  const Stencil s = make_stencil(image.height(), image.width(), point);
  const double v00 = image.at(s.r0, s.c0);
  const double v01 = image.at(s.r0, s.c0 + 1);
  const double v10 = image.at(s.r0 + 1, s.c0);
  const double v11 = image.at(s.r0 + 1, s.c0 + 1);
  return (1.0 - s.fr) * ((1.0 - s.fc) * v00 + s.fc * v01) + s.fr * ((1.0 - s.fc) * v10 + s.fc * v11);
}

SampleDerivative bilinear_sample_derivative(const Image& image, Coordinate point) {
  const Stencil s = make_stencil(image.height(), image.width(), point);
  const double v00 = image.at(s.r0, s.c0);
  const double v01 = image.at(s.r0, s.c0 + 1);
  const double v10 = image.at(s.r0 + 1, s.c0);
  const double v11 = image.at(s.r0 + 1, s.c0 + 1);
  SampleDerivative d;
  d.value = (1.0 - s.fr) * ((1.0 - s.fc) * v00 + s.fc * v01) + s.fr * ((1.0 - s.fc) * v10 + s.fc * v11);
  d.d_row = s.row_clamped ? 0.0 : (1.0 - s.fc) * (v10 - v00) + s.fc * (v11 - v01);
  d.d_col = s.col_clamped ? 0.0 : (1.0 - s.fr) * (v01 - v00) + s.fr * (v11 - v10);
  return d;
}

Coordinate sample_field(const DisplacementField& field, Coordinate point) {
  const Stencil s = make_stencil(field.height(), field.width(), point);
  const auto lerp = [&](auto component) {
    const double v00 = component(s.r0, s.c0), v01 = component(s.r0, s.c0 + 1);
    const double v10 = component(s.r0 + 1, s.c0), v11 = component(s.r0 + 1, s.c0 + 1);
    return (1.0 - s.fr) * ((1.0 - s.fc) * v00 + s.fc * v01) + s.fr * ((1.0 - s.fc) * v10 + s.fc * v11);
  };
  return {lerp([&](int r, int c) { return field.row(r, c); }), lerp([&](int r, int c) { return field.col(r, c); })};
}

Image warp_image(const Image& image, const DisplacementField& field) {
  if (!field.same_shape(image)) throw std::invalid_argument("warp_image: field and image shapes differ");
  Image out(image.height(), image.width());
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      out.at(r, c) = bilinear_sample(image, {r + field.row(r, c), c + field.col(r, c)});
    }
  }
  return out;
}

WarpGradients warp_image_backward(const Image& image, const DisplacementField& field,
                                  const Image& d_output) {
  if (!field.same_shape(image) || !d_output.same_shape(image)) {
    throw std::invalid_argument("warp_image_backward: shape mismatch");
  }
  WarpGradients g{DisplacementField(image.height(), image.width()), Image(image.height(), image.width())};
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      const double upstream = d_output.at(r, c);
      if (upstream == 0.0) continue;
      const Coordinate p{r + field.row(r, c), c + field.col(r, c)};
      const SampleDerivative d = bilinear_sample_derivative(image, p);
      g.d_field.row(r, c) = upstream * d.d_row;
      g.d_field.col(r, c) = upstream * d.d_col;
      const Stencil s = make_stencil(image.height(), image.width(), p);
      g.d_image.at(s.r0, s.c0) += upstream * (1.0 - s.fr) * (1.0 - s.fc);
      g.d_image.at(s.r0, s.c0 + 1) += upstream * (1.0 - s.fr) * s.fc;
      g.d_image.at(s.r0 + 1, s.c0) += upstream * s.fr * (1.0 - s.fc);
      g.d_image.at(s.r0 + 1, s.c0 + 1) += upstream * s.fr * s.fc;
    }
  }
  return g;
}

FieldGradient::FieldGradient(int height, int width)
    : height_(height), width_(width), data_(4 * static_cast<std::size_t>(height) * width, 0.0) {}

FieldGradient spatial_gradient(const DisplacementField& field) {
  const int h = field.height();
  const int w = field.width();
  FieldGradient g(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (r + 1 < h) {
        g.at(r, c, 0, 0) = field.row(r + 1, c) - field.row(r, c);
        g.at(r, c, 1, 0) = field.col(r + 1, c) - field.col(r, c);
      }
      if (c + 1 < w) {
        g.at(r, c, 0, 1) = field.row(r, c + 1) - field.row(r, c);
        g.at(r, c, 1, 1) = field.col(r, c + 1) - field.col(r, c);
      }
    }
  }
  return g;
}

DisplacementField spatial_gradient_backward(const FieldGradient& d_gradient) {
  const int h = d_gradient.height();
  const int w = d_gradient.width();
  DisplacementField d(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (r + 1 < h) {
        d.row(r + 1, c) += d_gradient.at(r, c, 0, 0);
        d.row(r, c) -= d_gradient.at(r, c, 0, 0);
        d.col(r + 1, c) += d_gradient.at(r, c, 1, 0);
        d.col(r, c) -= d_gradient.at(r, c, 1, 0);
      }
      if (c + 1 < w) {
        d.row(r, c + 1) += d_gradient.at(r, c, 0, 1);
        d.row(r, c) -= d_gradient.at(r, c, 0, 1);
        d.col(r, c + 1) += d_gradient.at(r, c, 1, 1);
        d.col(r, c) -= d_gradient.at(r, c, 1, 1);
      }
    }
  }
  return d;
}

namespace {

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) on one line.
void distance_1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    while (k >= 0) {
      const int p = v[k];
      const double s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -inf : ((f[q] + double(q) * q) - (f[v[k - 1]] + double(v[k - 1]) * v[k - 1])) /
                               (2.0 * (q - v[k - 1]));
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill(d, d + n, inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double diff = q - v[j];
    d[q] = diff * diff + f[v[j]];
  }
}

}  // namespace

std::vector<double> squared_distance_transform(int height, int width, const std::vector<bool>& seeds) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const int n = std::max(height, width);
  std::vector<double> grid(static_cast<std::size_t>(height) * width);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = seeds[i] ? 0.0 : inf;

  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  std::vector<double> f(n), d(n);
  for (int c = 0; c < width; ++c) {
    for (int r = 0; r < height; ++r) f[r] = grid[static_cast<std::size_t>(r) * width + c];
    distance_1d(f.data(), d.data(), height, v, z);
    for (int r = 0; r < height; ++r) grid[static_cast<std::size_t>(r) * width + c] = d[r];
  }
  for (int r = 0; r < height; ++r) {
    double* row = grid.data() + static_cast<std::size_t>(r) * width;
    std::copy(row, row + width, f.begin());
    distance_1d(f.data(), row, width, v, z);
  }
  return grid;
}

Image to_signed_distance(const Image& binary, double threshold, double clip) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("to_signed_distance: threshold must lie in (0,1)");
  }
  if (!(clip > 0.0)) throw std::invalid_argument("to_signed_distance: clip radius must be positive");
  const int h = binary.height();
  const int w = binary.width();
  auto fg = [&](int r, int c) { return binary.at(r, c) >= threshold; };

  std::vector<bool> boundary(static_cast<std::size_t>(h) * w, false);
  bool any = false;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!fg(r, c)) continue;
      const bool edge = (r > 0 && !fg(r - 1, c)) || (r + 1 < h && !fg(r + 1, c)) ||
                        (c > 0 && !fg(r, c - 1)) || (c + 1 < w && !fg(r, c + 1));
      if (edge) {
        boundary[static_cast<std::size_t>(r) * w + c] = true;
        any = true;
      }
    }
  }
  if (!any) throw std::invalid_argument("to_signed_distance: image has no foreground/background boundary");

  const std::vector<double> sq = squared_distance_transform(h, w, boundary);
  Image out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double dist = std::sqrt(sq[static_cast<std::size_t>(r) * w + c]);
      const double signed_dist = fg(r, c) ? -dist : dist;
      out.at(r, c) = (std::clamp(signed_dist, -clip, clip) + clip) / (2.0 * clip);
    }
  }
  return out;
}

}  // namespace coreg
