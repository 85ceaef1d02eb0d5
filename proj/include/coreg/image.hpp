#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coreg {

/// Raised for unreadable, unwritable or malformed files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Continuous pixel coordinate; (0,0) is the centre of the top-left pixel.
struct Coordinate {
  double row = 0.0;
  double col = 0.0;
  bool operator==(const Coordinate&) const = default;
};

/// Row-major H×W grid of scalar intensities.
class Image {
 public:
  Image() = default;
  Image(int height, int width, double fill = 0.0);
  Image(int height, int width, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * width_ + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * width_ + c]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool operator==(const Image& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Per-pixel displacement in pixel units, stored row-major with the two
/// components interleaved (row-offset, col-offset).
class DisplacementField {
 public:
  DisplacementField() = default;
  DisplacementField(int height, int width);
  DisplacementField(int height, int width, std::vector<double> data);

  /// Field with the same offset at every pixel.
  static DisplacementField uniform(int height, int width, double d_row, double d_col);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  double& row(int r, int c) { return data_[index(r, c)]; }
  double row(int r, int c) const { return data_[index(r, c)]; }
  double& col(int r, int c) { return data_[index(r, c) + 1]; }
  double col(int r, int c) const { return data_[index(r, c) + 1]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Image& image) const {
    return height_ == image.height() && width_ == image.width();
  }
  bool same_shape(const DisplacementField& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool operator==(const DisplacementField& other) const = default;

 private:
  std::size_t index(int r, int c) const {
    return 2 * (static_cast<std::size_t>(r) * width_ + c);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// 8-bit RGB raster used for figures.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}

  std::array<std::uint8_t, 3> get(int r, int c) const;
  void set(int r, int c, std::array<std::uint8_t, 3> rgb);
};

// Raw array format: 16-byte header ("CRFD", u32 height, u32 width,
// u32 channels), then little-endian float32 values, row-major with the
// channel index fastest.

struct RawArray {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  std::vector<float> values;
};

void write_raw(const std::filesystem::path& path, const RawArray& array);
RawArray read_raw(const std::filesystem::path& path);

void save_image(const std::filesystem::path& path, const Image& image);
Image load_image(const std::filesystem::path& path);
void save_field(const std::filesystem::path& path, const DisplacementField& field);
DisplacementField load_field(const std::filesystem::path& path);

/// 8-bit grayscale PNG, [0,1] mapped linearly to [0,255] (values clamped).
void write_png(const std::filesystem::path& path, const Image& image);
void write_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace coreg
