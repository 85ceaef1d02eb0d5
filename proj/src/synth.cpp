#include "coreg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "coreg/random.hpp"

namespace coreg {

namespace bb = boxbump;

std::string to_string(ShapeFamily family) {
  return family == ShapeFamily::linear ? "linear" : "rotating";
}

ShapeFamily parse_shape_family(const std::string& name) {
  if (name == "linear") return ShapeFamily::linear;
  if (name == "rotating") return ShapeFamily::rotating;
  throw std::invalid_argument("unknown shape family: " + name);
}

namespace {

// 4x4 supersampling; offsets are symmetric so mirrored shapes rasterize
// to mirrored images exactly.
template <typename Inside>
Image rasterize(Inside inside) {
  constexpr double offsets[4] = {-0.375, -0.125, 0.125, 0.375};
  Image img(bb::kImageSize, bb::kImageSize);
  for (int r = 0; r < bb::kImageSize; ++r) {
    for (int c = 0; c < bb::kImageSize; ++c) {
      int hits = 0;
      for (double dr : offsets) {
        for (double dc : offsets) hits += inside(r + dr, c + dc) ? 1 : 0;
      }
      img.at(r, c) = hits / 16.0;
    }
  }
  return img;
}

bool in_disk(double r, double c, double cr, double cc, double radius) {
  const double dr = r - cr;
  const double dc = c - cc;
  return dr * dr + dc * dc <= radius * radius;
}

}  // namespace

ShapeSample make_linear_boxbump(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("make_linear_boxbump: t must lie in [0,1]");
  const double bump_col = bb::bump_column(t);
  ShapeSample s;
  s.family = ShapeFamily::linear;
  s.param = t;
  s.image = rasterize([&](double r, double c) {
    const bool rect = r >= bb::kRectTop && r <= bb::kRectBottom && c >= bb::kRectLeft && c <= bb::kRectRight;
    return rect || in_disk(r, c, bb::kRectTop, bump_col, bb::kBumpRadius);
  });
  s.landmarks = {
      {bb::kRectTop - bb::kBumpRadius, bump_col},
      {bb::kRectTop, bump_col - bb::kBumpRadius},
      {bb::kRectTop, bump_col + bb::kBumpRadius},
      {bb::kRectTop, bb::kRectLeft},
      {bb::kRectTop, bb::kRectRight},
      {bb::kRectBottom, bb::kRectLeft},
      {bb::kRectBottom, bb::kRectRight},
  };
  return s;
}

ShapeSample make_rotating_boxbump(double theta_deg) {
  if (!(theta_deg >= -bb::kMaxAngleDeg && theta_deg <= bb::kMaxAngleDeg)) {
    throw std::invalid_argument("make_rotating_boxbump: theta must lie in [-50,50] degrees");
  }
  const double theta = theta_deg * std::numbers::pi / 180.0;
  const double R = bb::kDiskRadius;
  const double r = bb::kBumpRadius;
  auto on_circle = [&](double angle, double radius) {
    return Coordinate{bb::kDiskCenterRow - radius * std::cos(angle), bb::kDiskCenterCol + radius * std::sin(angle)};
  };
  const Coordinate bump_center = on_circle(theta, R);

  ShapeSample s;
  s.family = ShapeFamily::rotating;
  s.param = theta_deg;
  s.image = rasterize([&](double row, double col) {
    return in_disk(row, col, bb::kDiskCenterRow, bb::kDiskCenterCol, R) ||
           in_disk(row, col, bump_center.row, bump_center.col, r);
  });
  const double half_base = std::asin(r / R);
  s.landmarks = {on_circle(theta, R + r), on_circle(theta - half_base, R), on_circle(theta + half_base, R)};
  return s;
}

ShapeSample make_boxbump(ShapeFamily family, double param) {
  return family == ShapeFamily::linear ? make_linear_boxbump(param) : make_rotating_boxbump(param);
}

double family_param(ShapeFamily family, int i, int n) {
  if (n < 2 || i < 0 || i >= n) throw std::invalid_argument("family_param: index out of range");
  const double u = static_cast<double>(i) / (n - 1);
  return family == ShapeFamily::linear ? u : -bb::kMaxAngleDeg + 2.0 * bb::kMaxAngleDeg * u;
}

double centered_param(ShapeFamily family) { return family == ShapeFamily::linear ? 0.5 : 0.0; }

PairDataset build_pair_dataset(ShapeFamily family, int n_shapes, std::uint64_t seed,
                               std::optional<std::size_t> max_train_pairs) {
  if (n_shapes < 2) throw std::invalid_argument("build_pair_dataset: n_shapes must be >= 2");
  PairDataset ds;
  ds.family = family;
  ds.seed = seed;
  ds.samples.reserve(n_shapes);
  for (int i = 0; i < n_shapes; ++i) ds.samples.push_back(make_boxbump(family, family_param(family, i, n_shapes)));

  std::vector<RegistrationPair> pairs;
  pairs.reserve(static_cast<std::size_t>(n_shapes) * (n_shapes - 1));
  for (std::size_t s = 0; s < ds.samples.size(); ++s) {
    for (std::size_t t = 0; t < ds.samples.size(); ++t) {
      if (s != t) pairs.push_back({s, t});
    }
  }
  Rng rng(seed);
  rng.shuffle(pairs);

  std::size_t n_test = static_cast<std::size_t>(std::lround(kTestFraction * static_cast<double>(pairs.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, pairs.size() - 1);
  ds.test.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(n_test));
  ds.train.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_test), pairs.end());
  if (max_train_pairs && ds.train.size() > *max_train_pairs) ds.train.resize(*max_train_pairs);
  return ds;
}

std::string dataset_cache_key(ShapeFamily family, int n_shapes, std::uint64_t seed) {
  return to_string(family) + "_n" + std::to_string(n_shapes) + "_seed" + std::to_string(seed);
}

namespace {

void write_pairs(const std::filesystem::path& path, const std::vector<RegistrationPair>& pairs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "source,target\n";
  for (const auto& p : pairs) out << p.source << ',' << p.target << '\n';
}

std::vector<RegistrationPair> read_pairs(const std::filesystem::path& path, std::size_t n_samples) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<RegistrationPair> pairs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    RegistrationPair p;
    char comma = 0;
    std::istringstream ss(line);
    if (!(ss >> p.source >> comma >> p.target) || comma != ',' || p.source >= n_samples || p.target >= n_samples) {
      throw IoError("malformed pair line in " + path.string() + ": " + line);
    }
    pairs.push_back(p);
  }
  return pairs;
}

std::string sample_file(std::size_t i) {
  std::ostringstream name;
  name << "sample_" << std::setw(4) << std::setfill('0') << i << ".raw";
  return name.str();
}

}  // namespace

void save_dataset_cache(const PairDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw IoError("cannot write manifest in " + dir.string());
  manifest << std::setprecision(17);
  manifest << "# family=" << to_string(dataset.family) << " seed=" << dataset.seed
           << " bump_width=" << dataset.bump_width << '\n';
  manifest << "index,param,landmarks\n";
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const ShapeSample& s = dataset.samples[i];
    save_image(dir / sample_file(i), s.image);
    manifest << i << ',' << s.param << ',';
    for (std::size_t k = 0; k < s.landmarks.size(); ++k) {
      manifest << (k ? ";" : "") << s.landmarks[k].row << ' ' << s.landmarks[k].col;
    }
    manifest << '\n';
  }
  write_pairs(dir / "train.csv", dataset.train);
  write_pairs(dir / "test.csv", dataset.test);
}

PairDataset load_dataset_cache(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.csv");
  if (!manifest) throw IoError("no dataset manifest in " + dir.string());
  PairDataset ds;
  std::string line;
  std::getline(manifest, line);
  {
    std::istringstream ss(line);
    std::string hash, fam, seed, width;
    ss >> hash >> fam >> seed >> width;
    if (hash != "#" || fam.rfind("family=", 0) != 0 || seed.rfind("seed=", 0) != 0 ||
        width.rfind("bump_width=", 0) != 0) {
      throw IoError("malformed manifest header in " + dir.string());
    }
    ds.family = parse_shape_family(fam.substr(7));
    ds.seed = std::stoull(seed.substr(5));
    ds.bump_width = std::stod(width.substr(11));
  }
  std::getline(manifest, line);
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string index, param, marks;
    if (!std::getline(ss, index, ',') || !std::getline(ss, param, ',') || !std::getline(ss, marks)) {
      throw IoError("malformed manifest line: " + line);
    }
    ShapeSample s;
    s.family = ds.family;
    s.param = std::stod(param);
    std::istringstream ms(marks);
    std::string one;
    while (std::getline(ms, one, ';')) {
      std::istringstream cs(one);
      Coordinate p;
      if (!(cs >> p.row >> p.col)) throw IoError("malformed landmark: " + one);
      s.landmarks.push_back(p);
    }
    s.image = load_image(dir / sample_file(ds.samples.size()));
    ds.samples.push_back(std::move(s));
  }
  ds.train = read_pairs(dir / "train.csv", ds.samples.size());
  ds.test = read_pairs(dir / "test.csv", ds.samples.size());
  return ds;
}

PairDataset load_or_build_dataset(const std::filesystem::path& root, ShapeFamily family, int n_shapes,
                                  std::uint64_t seed, std::optional<std::size_t> max_train_pairs) {
  const std::filesystem::path dir = root / dataset_cache_key(family, n_shapes, seed);
  PairDataset ds;
  if (std::filesystem::exists(dir / "manifest.csv")) {
    ds = load_dataset_cache(dir);
  } else {
    ds = build_pair_dataset(family, n_shapes, seed);
    save_dataset_cache(ds, dir);
  }
  if (max_train_pairs && ds.train.size() > *max_train_pairs) ds.train.resize(*max_train_pairs);
  return ds;
}

}  // namespace coreg
