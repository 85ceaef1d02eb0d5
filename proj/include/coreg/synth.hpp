#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coreg/image.hpp"

namespace coreg {

enum class ShapeFamily { linear, rotating };

std::string to_string(ShapeFamily family);
ShapeFamily parse_shape_family(const std::string& name);

/// Box-bump geometry. All lengths in pixels, rows/cols in continuous pixel
/// coordinates.
namespace boxbump {
inline constexpr int kImageSize = 64;
inline constexpr double kBumpRadius = 5.0;
inline constexpr double kBumpWidth = 2.0 * kBumpRadius;

inline constexpr double kRectTop = 24.0;
inline constexpr double kRectBottom = 44.0;
inline constexpr double kRectLeft = 8.0;
inline constexpr double kRectRight = 56.0;
inline constexpr double kBumpTravelStart = 16.0;
inline constexpr double kBumpTravel = 32.0;

inline constexpr double kDiskRadius = 16.0;
inline constexpr double kDiskCenterRow = 36.0;
inline constexpr double kDiskCenterCol = 32.0;
inline constexpr double kMaxAngleDeg = 50.0;

/// Bump centre column of the linear family, c(t) = 16 + 32 t.
inline constexpr double bump_column(double t) { return kBumpTravelStart + kBumpTravel * t; }
}  // namespace boxbump

struct ShapeSample {
  Image image;
  std::vector<Coordinate> landmarks;
  double param = 0.0;  // t in [0,1] (linear) or theta in degrees (rotating)
  ShapeFamily family = ShapeFamily::linear;
};

/// Rectangle with a semicircular bump on its top edge; bump centre at column
/// 16 + 32 t. Landmarks: apex, left base, right base, then the rectangle
/// corners (top-left, top-right, bottom-left, bottom-right).
ShapeSample make_linear_boxbump(double t);

/// Disk with a semicircular bump on its boundary at angle theta (0 = up,
/// positive clockwise). Landmarks: apex, base at theta - asin(r/R), base at
/// theta + asin(r/R).
ShapeSample make_rotating_boxbump(double theta_deg);

/// Sample of either family at parameter `param`.
ShapeSample make_boxbump(ShapeFamily family, double param);

/// Parameter of the i-th of n uniformly spaced samples spanning the family's range.
double family_param(ShapeFamily family, int i, int n);

/// Parameter of the centred-bump sample (t = 0.5 or theta = 0).
double centered_param(ShapeFamily family);

/// Ordered pair of sample indices into PairDataset::samples.
struct RegistrationPair {
  std::size_t source = 0;
  std::size_t target = 0;
  bool operator==(const RegistrationPair&) const = default;
};

struct PairDataset {
  ShapeFamily family = ShapeFamily::linear;
  std::vector<ShapeSample> samples;
  std::vector<RegistrationPair> train;
  std::vector<RegistrationPair> test;
  double bump_width = boxbump::kBumpWidth;
  std::uint64_t seed = 0;

  const ShapeSample& source(const RegistrationPair& p) const { return samples.at(p.source); }
  const ShapeSample& target(const RegistrationPair& p) const { return samples.at(p.target); }
};

inline constexpr double kTestFraction = 0.25;

/// All n(n-1) ordered pairs of n uniformly spaced samples, shuffled with
/// `seed`; the first 25% (rounded, at least one) form the test split. The train
/// split is optionally truncated to `max_train_pairs`.
PairDataset build_pair_dataset(ShapeFamily family, int n_shapes, std::uint64_t seed,
                               std::optional<std::size_t> max_train_pairs = std::nullopt);

/// Cache directory name for a dataset, e.g. "linear_n100_seed7".
std::string dataset_cache_key(ShapeFamily family, int n_shapes, std::uint64_t seed);

/// Writes samples as raw images plus manifest.csv (index, param, landmark
/// coordinates) and the split files train.csv / test.csv.
void save_dataset_cache(const PairDataset& dataset, const std::filesystem::path& dir);
PairDataset load_dataset_cache(const std::filesystem::path& dir);

/// Loads `root/<key>` if present, otherwise builds the dataset and writes it there.
PairDataset load_or_build_dataset(const std::filesystem::path& root, ShapeFamily family, int n_shapes,
                                  std::uint64_t seed, std::optional<std::size_t> max_train_pairs = std::nullopt);

}  // namespace coreg
