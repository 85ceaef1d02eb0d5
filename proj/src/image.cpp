#include "coreg/image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace coreg {

namespace {

void check_dims(int height, int width) {
  if (height < 2 || width < 2) {
    throw std::invalid_argument("image dimensions must be at least 2x2, got " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
}

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + " contains non-finite values");
  }
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

constexpr char kMagic[4] = {'C', 'R', 'F', 'D'};

}  // namespace

Image::Image(int height, int width, double fill)
    : height_(height), width_(width), data_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0), fill) {
  check_dims(height, width);
  check_finite(std::span<const double>(&fill, 1), "image fill");
}

Image::Image(int height, int width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  check_dims(height, width);
  if (data_.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("image data size does not match dimensions");
  }
  check_finite(data_, "image");
}

DisplacementField::DisplacementField(int height, int width)
    : height_(height), width_(width), data_(2 * static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0), 0.0) {
  check_dims(height, width);
}

DisplacementField::DisplacementField(int height, int width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  check_dims(height, width);
  if (data_.size() != 2 * static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("field data size does not match dimensions");
  }
  check_finite(data_, "displacement field");
}

DisplacementField DisplacementField::uniform(int height, int width, double d_row, double d_col) {
  DisplacementField f(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      f.row(r, c) = d_row;
      f.col(r, c) = d_col;
    }
  }
  return f;
}

std::array<std::uint8_t, 3> RgbImage::get(int r, int c) const {
  const std::size_t i = 3 * (static_cast<std::size_t>(r) * width + c);
  return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void RgbImage::set(int r, int c, std::array<std::uint8_t, 3> rgb) {
  const std::size_t i = 3 * (static_cast<std::size_t>(r) * width + c);
  pixels[i] = rgb[0];
  pixels[i + 1] = rgb[1];
  pixels[i + 2] = rgb[2];
}

void write_raw(const std::filesystem::path& path, const RawArray& array) {
  const std::size_t n = static_cast<std::size_t>(array.height) * array.width * array.channels;
  if (array.values.size() != n) throw std::invalid_argument("raw array size does not match header");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kMagic, 4);
  put_u32(out, array.height);
  put_u32(out, array.width);
  put_u32(out, array.channels);
  for (float v : array.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw IoError("write failed: " + path.string());
}

RawArray read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  unsigned char header[16];
  in.read(reinterpret_cast<char*>(header), 16);
  if (in.gcount() != 16 || std::memcmp(header, kMagic, 4) != 0) {
    throw IoError("not a raw array file (bad header): " + path.string());
  }
  RawArray a;
  a.height = get_u32(header + 4);
  a.width = get_u32(header + 8);
  a.channels = get_u32(header + 12);
  const std::size_t n = static_cast<std::size_t>(a.height) * a.width * a.channels;
  std::vector<unsigned char> bytes(4 * n);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw IoError("truncated raw array file: " + path.string());
  }
  a.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) a.values[i] = std::bit_cast<float>(get_u32(bytes.data() + 4 * i));
  return a;
}

void save_image(const std::filesystem::path& path, const Image& image) {
  RawArray a{static_cast<std::uint32_t>(image.height()), static_cast<std::uint32_t>(image.width()), 1, {}};
  a.values.assign(image.values().begin(), image.values().end());
  write_raw(path, a);
}

Image load_image(const std::filesystem::path& path) {
  RawArray a = read_raw(path);
  if (a.channels != 1) throw IoError("expected a 1-channel image: " + path.string());
  return Image(static_cast<int>(a.height), static_cast<int>(a.width),
               std::vector<double>(a.values.begin(), a.values.end()));
}

void save_field(const std::filesystem::path& path, const DisplacementField& field) {
  RawArray a{static_cast<std::uint32_t>(field.height()), static_cast<std::uint32_t>(field.width()), 2, {}};
  a.values.assign(field.values().begin(), field.values().end());
  write_raw(path, a);
}

DisplacementField load_field(const std::filesystem::path& path) {
  RawArray a = read_raw(path);
  if (a.channels != 2) throw IoError("expected a 2-channel field: " + path.string());
  return DisplacementField(static_cast<int>(a.height), static_cast<int>(a.width),
                           std::vector<double>(a.values.begin(), a.values.end()));
}

namespace {

void write_png_rows(const std::filesystem::path& path, int width, int height, int color_type,
                    const std::vector<std::uint8_t>& bytes, int bytes_per_pixel) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * bytes_per_pixel;
  for (int r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + r * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> bytes(image.size());
  auto v = image.values();
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v[i], 0.0, 1.0)));
  }
  write_png_rows(path, image.width(), image.height(), PNG_COLOR_TYPE_GRAY, bytes, 1);
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  write_png_rows(path, image.width, image.height, PNG_COLOR_TYPE_RGB, image.pixels, 3);
}

}  // namespace coreg
