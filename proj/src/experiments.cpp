#include "coreg/experiments.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "coreg/fields.hpp"

namespace coreg {

std::string to_string(Method method) {
  switch (method) {
    case Method::cae: return "cae";
    case Method::undr: return "undr";
    case Method::undr_bn: return "undr_bn";
    case Method::undr_bn_noskip: return "undr_bn_noskip";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::cae, Method::undr, Method::undr_bn, Method::undr_bn_noskip}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown method: " + name);
}

void ExperimentSpec::validate() const {
  if (name.empty()) throw std::invalid_argument("experiment name is empty");
  if (output_dir.empty()) throw std::invalid_argument("experiment " + name + ": output_dir is empty");
  if (dataset.n_shapes < 2) throw std::invalid_argument("experiment " + name + ": n_shapes must be >= 2");
  if (comparison_h < 1) throw std::invalid_argument("experiment " + name + ": comparison_h must be >= 1");
  train.validate();
  const auto fail = [&](const std::string& why) { throw std::invalid_argument("experiment " + name + ": " + why); };
  const bool has_bn = train.primary.bottleneck_dim.has_value();
  switch (method) {
    case Method::cae:
      if (!train.cae) fail("method cae needs a train.cae config");
      if (has_bn) fail("method cae expects no primary bottleneck");
      break;
    case Method::undr:
      if (train.cae || has_bn) fail("method undr expects no cae and no primary bottleneck");
      break;
    case Method::undr_bn:
      if (train.cae || !has_bn) fail("method undr_bn needs primary.bottleneck_dim and no cae");
      if (!train.primary.skip_connections) fail("method undr_bn keeps skip connections");
      break;
    case Method::undr_bn_noskip:
      if (train.cae || !has_bn) fail("method undr_bn_noskip needs primary.bottleneck_dim and no cae");
      if (train.primary.skip_connections) fail("method undr_bn_noskip needs skip_connections = false");
      break;
  }
}

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const ExperimentSpec& s) {
  j = {{"name", s.name},
       {"method", to_string(s.method)},
       {"train", s.train},
       {"output_dir", s.output_dir.string()},
       {"comparison_h", s.comparison_h}};
  j["dataset"] = {{"family", to_string(s.dataset.family)},
                  {"n_shapes", s.dataset.n_shapes},
                  {"seed", s.dataset.seed},
                  {"max_train_pairs", s.dataset.max_train_pairs ? nlohmann::json(*s.dataset.max_train_pairs)
                                                                 : nlohmann::json(nullptr)}};
  j["posthoc"] = {{"iterations", s.posthoc.iterations},
                  {"learning_rate", s.posthoc.learning_rate},
                  {"batch_size", s.posthoc.batch_size},
                  {"levels", s.posthoc.levels},
                  {"base_channels", s.posthoc.base_channels}};
  j["dataset_cache"] = s.dataset_cache ? nlohmann::json(s.dataset_cache->string()) : nlohmann::json(nullptr);
}

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& what) {
  if (!j.is_object()) throw std::invalid_argument(what + ": expected a JSON object");
  for (const auto& item : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; })) {
      throw std::invalid_argument(what + ": unknown key '" + item.key() + "'");
    }
  }
}

}  // namespace

void from_json(const nlohmann::json& j, ExperimentSpec& s) {
  check_keys(j, {"name", "method", "dataset", "train", "output_dir", "comparison_h", "posthoc", "dataset_cache"},
             "experiment");
  s = ExperimentSpec{};
  s.name = j.at("name").get<std::string>();
  s.method = parse_method(j.at("method").get<std::string>());
  s.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("train")) s.train = j.at("train").get<TrainConfig>();
  if (j.contains("comparison_h")) s.comparison_h = j.at("comparison_h").get<int>();
  else if (s.train.cae) s.comparison_h = s.train.cae->h;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, {"family", "n_shapes", "seed", "max_train_pairs"}, "dataset");
    if (d.contains("family")) s.dataset.family = parse_shape_family(d.at("family").get<std::string>());
    if (d.contains("n_shapes")) s.dataset.n_shapes = d.at("n_shapes").get<int>();
    if (d.contains("seed")) s.dataset.seed = d.at("seed").get<std::uint64_t>();
    if (d.contains("max_train_pairs") && !d.at("max_train_pairs").is_null()) {
      s.dataset.max_train_pairs = d.at("max_train_pairs").get<std::size_t>();
    }
  }
  // The post-hoc fit shares the training optimizer settings unless overridden.
  s.posthoc.learning_rate = s.train.learning_rate;
  s.posthoc.batch_size = s.train.batch_size;
  if (j.contains("posthoc")) {
    const auto& p = j.at("posthoc");
    check_keys(p, {"iterations", "learning_rate", "batch_size", "levels", "base_channels"}, "posthoc");
    if (p.contains("iterations")) s.posthoc.iterations = p.at("iterations").get<int>();
    if (p.contains("learning_rate")) s.posthoc.learning_rate = p.at("learning_rate").get<double>();
    if (p.contains("batch_size")) s.posthoc.batch_size = p.at("batch_size").get<int>();
    if (p.contains("levels")) s.posthoc.levels = p.at("levels").get<int>();
    if (p.contains("base_channels")) s.posthoc.base_channels = p.at("base_channels").get<int>();
  }
  if (j.contains("dataset_cache") && !j.at("dataset_cache").is_null()) {
    s.dataset_cache = j.at("dataset_cache").get<std::string>();
  }
}

std::vector<ExperimentSpec> load_experiment_specs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
  }
  std::vector<ExperimentSpec> specs;
  if (j.is_object() && j.contains("experiments")) {
    for (const auto& e : j.at("experiments")) specs.push_back(e.get<ExperimentSpec>());
  } else {
    specs.push_back(j.get<ExperimentSpec>());
  }
  if (specs.empty()) throw std::invalid_argument("config " + path.string() + " defines no experiments");
  for (const auto& s : specs) s.validate();
  return specs;
}

// ---------------------------------------------------------------------------
// Pipeline

std::string method_label(const ExperimentSpec& spec) {
  std::ostringstream os;
  switch (spec.method) {
    case Method::cae: os << "CAE h=" << spec.train.cae->h << " beta=" << spec.train.beta; break;
    case Method::undr: os << "UnDR"; break;
    case Method::undr_bn: os << "UnDR-BN h=" << *spec.train.primary.bottleneck_dim; break;
    case Method::undr_bn_noskip: os << "UnDR-BN-noskip h=" << *spec.train.primary.bottleneck_dim; break;
  }
  return os.str();
}

PairDataset build_experiment_dataset(const ExperimentSpec& spec) {
  const auto& d = spec.dataset;
  if (spec.dataset_cache) return load_or_build_dataset(*spec.dataset_cache, d.family, d.n_shapes, d.seed, d.max_train_pairs);
  return build_pair_dataset(d.family, d.n_shapes, d.seed, d.max_train_pairs);
}

TrainedModel train_experiment(const ExperimentSpec& spec, const PairDataset& dataset, const HistoryCallback& on_record) {
  spec.validate();
  std::filesystem::create_directories(spec.output_dir);
  {
    std::ofstream out(spec.output_dir / "config.json");
    if (!out) throw IoError("cannot write config snapshot in " + spec.output_dir.string());
    out << nlohmann::json(spec).dump(2) << '\n';
  }
  TrainedModel model = train(spec.train, dataset, on_record);
  save_checkpoint(model, spec.output_dir / "checkpoint");
  write_history_csv(spec.output_dir / "history.csv", model.history);
  return model;
}

namespace {

constexpr const char* kReportHeader = "dataset,method,ae_error_pct,dice,landmark_error_pct,test_runtime_sec";

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

void write_rows_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows,
                    const std::vector<int>* n_pairs = nullptr) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << kReportHeader << (n_pairs ? ",n_pairs" : "") << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << r.dataset << ',' << r.method << ',' << fmt(r.ae_error_pct) << ',' << fmt(r.dice) << ','
        << fmt(r.landmark_error_pct) << ',' << fmt(r.test_runtime_sec);
    if (n_pairs) out << ',' << (*n_pairs)[i];
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void blit_gray(RgbImage& canvas, const Image& img, int top, int left) {
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      const auto v = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(img.at(r, c), 0.0, 1.0)));
      canvas.set(top + r, left + c, {v, v, v});
    }
  }
}

void blit_rgb(RgbImage& canvas, const RgbImage& img, int top, int left) {
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) canvas.set(top + r, left + c, img.get(r, c));
  }
}

constexpr int kGap = 2;
constexpr int kFigurePairs = 6;

// One row per pair: source, target, registered, false colour, deformed grid.
void write_pair_figure(const std::filesystem::path& path, const PairDataset& dataset,
                       std::span<const RegistrationPair> pairs, std::span<const DisplacementField> fields) {
  const int n = static_cast<int>(std::min<std::size_t>(pairs.size(), kFigurePairs));
  if (n == 0) return;
  const int h = fields[0].height(), w = fields[0].width();
  RgbImage canvas(n * (h + kGap) - kGap, 5 * (w + kGap) - kGap);
  for (int i = 0; i < n; ++i) {
    const Image& source = dataset.source(pairs[i]).image;
    const Image& target = dataset.target(pairs[i]).image;
    const Image registered = warp_image(source, fields[i]);
    const int top = i * (h + kGap);
    blit_gray(canvas, source, top, 0);
    blit_gray(canvas, target, top, w + kGap);
    blit_gray(canvas, registered, top, 2 * (w + kGap));
    blit_rgb(canvas, render_falsecolor(target, registered), top, 3 * (w + kGap));
    blit_gray(canvas, render_deformed_grid(fields[i]), top, 4 * (w + kGap));
  }
  write_png(path, canvas);
}

}  // namespace

ReportRow evaluate_experiment(const ExperimentSpec& spec, const TrainedModel& model, const PairDataset& dataset) {
  RegistrationEval eval = evaluate_registration(model.primary, dataset, dataset.test);
  if (model.cae) {
    eval.result.ae_error_pct = ae_relative_error(eval.fields, reconstruct_fields(*model.cae, eval.fields));
  } else {
    eval.result.ae_error_pct = posthoc_ae_fit(eval.fields, spec.comparison_h, spec.train.seed + 2, spec.posthoc).error_pct;
  }
  ReportRow row{to_string(spec.dataset.family), method_label(spec), eval.result.ae_error_pct, eval.result.dice_mean,
                eval.result.landmark_error_pct, eval.result.test_runtime_sec};

  std::filesystem::create_directories(spec.output_dir / "figures");
  const std::vector<int> n_pairs{eval.result.n_pairs};
  write_rows_csv(spec.output_dir / "eval.csv", {row}, &n_pairs);
  write_pair_figure(spec.output_dir / "figures" / "test_pairs.png", dataset, dataset.test, eval.fields);
  return row;
}

ReportRow run_experiment(const ExperimentSpec& spec, const HistoryCallback& on_record) {
  try {
    spec.validate();
    const PairDataset dataset = build_experiment_dataset(spec);
    const TrainedModel model = train_experiment(spec, dataset, on_record);
    return evaluate_experiment(spec, model, dataset);
  } catch (const TrainingDiverged& e) {
    throw TrainingDiverged("experiment " + spec.name + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError("experiment " + spec.name + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("experiment " + spec.name + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error("experiment " + spec.name + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Latent sweep and figures

std::vector<SweepPoint> latent_sweep(const TrainedModel& model, ShapeFamily family, int n_sources,
                                     const std::optional<std::filesystem::path>& strip_png) {
  if (!model.cae || model.cae->config.h != 1) throw std::invalid_argument("latent_sweep: needs a CAE with h = 1");
  if (n_sources < 2) throw std::invalid_argument("latent_sweep: n_sources must be >= 2");
  const ShapeSample target = make_boxbump(family, centered_param(family));
  std::vector<SweepPoint> points;
  std::vector<ShapeSample> sources;
  std::vector<DisplacementField> fields;
  for (int i = 0; i < n_sources; ++i) {
    ShapeSample source = make_boxbump(family, family_param(family, i, n_sources));
    DisplacementField field = primary_forward(model.primary, source.image, target.image);
    points.push_back({source.param, cae_forward(*model.cae, field).latent.at(0)});
    sources.push_back(std::move(source));
    fields.push_back(std::move(field));
  }
  if (strip_png) {
    constexpr int kStrip = 10;
    const int h = target.image.height(), w = target.image.width();
    RgbImage canvas(2 * h + kGap, kStrip * (w + kGap) - kGap);
    for (int k = 0; k < kStrip; ++k) {
      const int i = static_cast<int>(std::lround(static_cast<double>(k) * (n_sources - 1) / (kStrip - 1)));
      blit_gray(canvas, sources[i].image, 0, k * (w + kGap));
      blit_gray(canvas, render_deformed_grid(fields[i]), h + kGap, k * (w + kGap));
    }
    write_png(*strip_png, canvas);
  }
  return points;
}

RgbImage render_falsecolor(const Image& target, const Image& registered, double threshold) {
  if (!target.same_shape(registered)) throw std::invalid_argument("render_falsecolor: image shapes differ");
  RgbImage out(target.height(), target.width());
  for (int r = 0; r < target.height(); ++r) {
    for (int c = 0; c < target.width(); ++c) {
      const bool in_t = target.at(r, c) >= threshold, in_r = registered.at(r, c) >= threshold;
      if (in_t && in_r) out.set(r, c, {255, 255, 255});
      else if (in_r) out.set(r, c, {0, 255, 0});
      else if (in_t) out.set(r, c, {255, 0, 255});
    }
  }
  return out;
}

Image render_deformed_grid(const DisplacementField& field, int spacing) {
  if (spacing < 2) throw std::invalid_argument("render_deformed_grid: spacing must be >= 2");
  Image grid(field.height(), field.width());
  for (int r = 0; r < grid.height(); ++r) {
    for (int c = 0; c < grid.width(); ++c) grid.at(r, c) = (r % spacing == 0 || c % spacing == 0) ? 1.0 : 0.0;
  }
  return warp_image(grid, field);
}

// ---------------------------------------------------------------------------
// Reports

void emit_report(std::vector<ReportRow> rows, const std::filesystem::path& path) {
  if (rows.empty()) throw std::invalid_argument("emit_report: no rows");
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return std::tie(a.dataset, a.method) < std::tie(b.dataset, b.method);
  });
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  write_rows_csv(path, rows);

  const std::vector<std::string> header{"dataset", "method", "ae_error_pct", "dice", "landmark_error_pct",
                                        "test_runtime_sec"};
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& r : rows) {
    cells.push_back({r.dataset, r.method, fmt(r.ae_error_pct), fmt(r.dice), fmt(r.landmark_error_pct),
                     fmt(r.test_runtime_sec)});
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t k = 0; k < line.size(); ++k) widths[k] = std::max(widths[k], line[k].size());
  }
  auto txt = path;
  txt.replace_extension(".txt");
  std::ofstream out(txt);
  if (!out) throw IoError("cannot open for writing: " + txt.string());
  for (const auto& line : cells) {
    for (std::size_t k = 0; k < line.size(); ++k) {
      // Text columns left-aligned, numbers right-aligned.
      if (k < 2) out << std::left;
      else out << std::right;
      out << std::setw(static_cast<int>(widths[k])) << line[k] << (k + 1 < line.size() ? "  " : "");
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + txt.string());
}

std::vector<ReportRow> read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind(kReportHeader, 0) != 0) throw IoError("bad report header: " + path.string());
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string item; std::getline(ss, item, ',');) f.push_back(item);
    if (f.size() < 6) throw IoError("bad report row in " + path.string() + ": " + line);
    try {
      rows.push_back({f[0], f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5])});
    } catch (const std::exception&) {
      throw IoError("bad number in report row of " + path.string() + ": " + line);
    }
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& points) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "param,latent\n" << std::setprecision(10);
  for (const auto& p : points) out << p.param << ',' << p.latent << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace coreg
