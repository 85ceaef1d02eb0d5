#pragma once

#include "coreg/image.hpp"

namespace coreg {

/// Bilinear interpolation with border clamping. Throws std::invalid_argument
/// for a non-finite point.
double bilinear_sample(const Image& image, Coordinate point);

/// Value of bilinear_sample and its partial derivatives w.r.t. the point.
/// The derivative is zero along an axis whose coordinate was clamped.
struct SampleDerivative {
  double value = 0.0;
  double d_row = 0.0;
  double d_col = 0.0;
};
SampleDerivative bilinear_sample_derivative(const Image& image, Coordinate point);

/// Bilinearly interpolated displacement at `point`, with border clamping.
Coordinate sample_field(const DisplacementField& field, Coordinate point);

/// Backward warp: output(x) = image(x + field(x)).
Image warp_image(const Image& image, const DisplacementField& field);

struct WarpGradients {
  DisplacementField d_field;
  Image d_image;
};

/// Vector-Jacobian product of warp_image: given dL/d(output), returns dL/d(field)
/// and dL/d(image).
WarpGradients warp_image_backward(const Image& image, const DisplacementField& field,
                                  const Image& d_output);

/// Forward-difference Jacobian of a displacement field, H×W×2×2.
/// at(r, c, component, axis): component 0 = row-offset, 1 = col-offset;
/// axis 0 = d/drow, 1 = d/dcol. The last row/column difference is 0.
class FieldGradient {
 public:
  FieldGradient(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }

  double& at(int r, int c, int component, int axis) { return data_[index(r, c, component, axis)]; }
  double at(int r, int c, int component, int axis) const { return data_[index(r, c, component, axis)]; }

  std::span<const double> values() const { return data_; }

 private:
  std::size_t index(int r, int c, int component, int axis) const {
    return 4 * (static_cast<std::size_t>(r) * width_ + c) + 2 * component + axis;
  }

  int height_;
  int width_;
  std::vector<double> data_;
};

FieldGradient spatial_gradient(const DisplacementField& field);

/// Adjoint of spatial_gradient.
DisplacementField spatial_gradient_backward(const FieldGradient& d_gradient);

/// Clip radius (pixels) used by to_signed_distance.
inline constexpr double kSignedDistanceClip = 10.0;

/// Signed Euclidean distance to the boundary of {pixel >= threshold}, negative
/// inside, clipped to [-clip, clip] and rescaled to [0, 1]. Boundary pixels are
/// foreground pixels with a 4-neighbour in the background; they map to 0.5.
Image to_signed_distance(const Image& binary, double threshold, double clip = kSignedDistanceClip);

/// Exact squared Euclidean distance transform (two separable passes) to the
/// set of pixels where `seeds` is true. Pixels are unreachable (infinity) only
/// when the seed set is empty.
std::vector<double> squared_distance_transform(int height, int width, const std::vector<bool>& seeds);

}  // namespace coreg
