#include "coreg/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "coreg/fields.hpp"
#include "coreg/random.hpp"

namespace coreg {

void TrainConfig::validate() const {
  if (total_iterations < 20) throw std::invalid_argument("TrainConfig: total_iterations must be >= 20");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
    throw std::invalid_argument("TrainConfig: warmup_fraction must lie in (0, 1)");
  }
  if (!std::isfinite(warmup_alpha) || warmup_alpha < 0.0) throw std::invalid_argument("TrainConfig: bad warmup_alpha");
  if (!std::isfinite(beta) || beta < 0.0) throw std::invalid_argument("TrainConfig: bad beta");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  }
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (ncc_window < 3 || ncc_window % 2 == 0) throw std::invalid_argument("TrainConfig: ncc_window must be odd and >= 3");
  primary.validate();
  if (cae) {
    cae->validate();
    if (cae->height != primary.height || cae->width != primary.width) {
      throw std::invalid_argument("TrainConfig: CAE and primary image sizes differ");
    }
  }
}

int TrainConfig::warmup_iterations() const {
  // Smallest integer >= fraction * total; the slack absorbs representation
  // error such as 0.05 * 20000 = 1000.0000000000001.
  return static_cast<int>(std::ceil(warmup_fraction * total_iterations - 1e-9));
}

ObjectiveWeights TrainConfig::weights_at(int iteration) const {
  ObjectiveWeights w;
  w.matching = matching;
  w.ncc_window = ncc_window;
  if (phase_at(iteration) == 1 || !cae) {
    w.alpha = warmup_alpha;
    w.beta = 0.0;
  } else {
    w.alpha = 0.0;
    w.beta = beta;
  }
  return w;
}

// ---------------------------------------------------------------------------
// History CSV

namespace {

constexpr const char* kHistoryHeader = "iteration,phase,matching,smoothness,cae_recon,total,alpha,beta";

std::string format_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double parse_real(const std::string& s, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(context + ": cannot parse number '" + s + "'");
  }
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << kHistoryHeader << '\n';
  for (const auto& r : history.records) {
    out << r.iteration << ',' << r.phase << ',' << format_real(r.matching) << ',' << format_real(r.smoothness) << ','
        << format_real(r.cae_recon) << ',' << format_real(r.total) << ',' << format_real(r.alpha) << ','
        << format_real(r.beta) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

TrainHistory read_history_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kHistoryHeader) throw IoError("bad history header: " + path.string());
  TrainHistory h;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) throw IoError("bad history row in " + path.string() + ": " + line);
    HistoryRecord r;
    r.iteration = static_cast<int>(parse_real(f[0], path.string()));
    r.phase = static_cast<int>(parse_real(f[1], path.string()));
    r.matching = parse_real(f[2], path.string());
    r.smoothness = parse_real(f[3], path.string());
    r.cae_recon = parse_real(f[4], path.string());
    r.total = parse_real(f[5], path.string());
    r.alpha = parse_real(f[6], path.string());
    r.beta = parse_real(f[7], path.string());
    h.records.push_back(r);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Optimizer

void Adam::step(nn::ParamSet<float>& params, const nn::ParamSet<float>& grads) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  auto& arrays = params.arrays();
  if (m_.empty()) {
    for (const auto& a : arrays) {
      m_.emplace_back(a.values.size(), 0.0f);
      v_.emplace_back(a.values.size(), 0.0f);
    }
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
  const float step_size = static_cast<float>(lr_ / bc1);
  const float bc2_sqrt = static_cast<float>(std::sqrt(bc2));
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    auto& p = arrays[i].values;
    const auto& g = grads[i].values;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = static_cast<float>(kBeta1) * m[k] + static_cast<float>(1.0 - kBeta1) * g[k];
      v[k] = static_cast<float>(kBeta2) * v[k] + static_cast<float>(1.0 - kBeta2) * g[k] * g[k];
      p[k] -= step_size * m[k] / (std::sqrt(v[k]) / bc2_sqrt + static_cast<float>(kEps));
    }
  }
}

// ---------------------------------------------------------------------------
// Batch objective

template <typename T>
ObjectiveValue batch_objective(const PrimaryNet& primary_net, const nn::ParamSet<T>& primary,
                               const CAENet* cae_net, const nn::ParamSet<T>* cae,
                               std::span<const Image* const> sources, std::span<const Image* const> targets,
                               const ObjectiveWeights& weights, nn::ParamSet<T>* d_primary,
                               nn::ParamSet<T>* d_cae) {
  if (sources.empty() || sources.size() != targets.size()) {
    throw std::invalid_argument("batch_objective: need matching, non-empty source and target lists");
  }
  const bool use_cae = cae_net != nullptr && cae != nullptr;
  const bool want_grads = d_primary != nullptr;
  if (want_grads && use_cae && d_cae == nullptr) throw std::invalid_argument("batch_objective: missing CAE gradient");

  const nn::Tensor<T> input = pack_pairs<T>(sources, targets);
  typename PrimaryNet::template Trace<T> trace;
  const nn::Tensor<T> fields = primary_net.forward(primary, input, want_grads ? &trace : nullptr);
  if (!std::all_of(fields.data.begin(), fields.data.end(), [](T x) { return std::isfinite(x); })) {
    throw TrainingDiverged("displacement field is not finite");
  }
  typename CAENet::template Trace<T> cae_trace;
  nn::Tensor<T> recon;
  if (use_cae) {
    const nn::Tensor<T> latent = cae_net->encode(*cae, fields, want_grads ? &cae_trace : nullptr);
    recon = cae_net->decode(*cae, latent, want_grads ? &cae_trace : nullptr);
  }

  const int n = static_cast<int>(sources.size());
  const double inv_n = 1.0 / n;
  nn::Tensor<T> d_fields, d_recon;
  if (want_grads) {
    d_fields = nn::Tensor<T>(2, n, fields.height, fields.width);
    if (use_cae) d_recon = nn::Tensor<T>(2, n, fields.height, fields.width);
  }
  ObjectiveValue mean;
  for (int b = 0; b < n; ++b) {
    const DisplacementField field = unpack_field(fields, b);
    const DisplacementField reconstruction = use_cae ? unpack_field(recon, b) : field;
    const Image registered = warp_image(*sources[b], field);
    ObjectiveValue v;
    if (want_grads) {
      ObjectiveGradients g;
      v = total_objective_with_grad(*targets[b], registered, field, reconstruction, weights, g);
      const WarpGradients wg = warp_image_backward(*sources[b], field, g.d_registered);
      auto df = g.d_field.values();
      auto dw = wg.d_field.values();
      for (std::size_t i = 0; i < df.size(); ++i) df[i] = (df[i] + dw[i]) * inv_n;
      store_field(g.d_field, b, d_fields);
      if (use_cae) {
        for (double& x : g.d_reconstruction.values()) x *= inv_n;
        store_field(g.d_reconstruction, b, d_recon);
      }
    } else {
      v = total_objective(*targets[b], registered, field, reconstruction, weights);
    }
    mean.matching += v.matching * inv_n;
    mean.smoothness += v.smoothness * inv_n;
    mean.cae_recon += v.cae_recon * inv_n;
  }
  mean.total = mean.matching + weights.alpha * mean.smoothness + weights.beta * mean.cae_recon;

  if (want_grads) {
    if (use_cae) {
      const nn::Tensor<T> d_in = cae_net->backward(*cae, cae_trace, d_recon, nullptr, *d_cae);
      nn::add_inplace(d_fields, d_in);
    }
    primary_net.backward(primary, trace, d_fields, *d_primary);
  }
  return mean;
}

template ObjectiveValue batch_objective<float>(const PrimaryNet&, const nn::ParamSet<float>&, const CAENet*,
                                               const nn::ParamSet<float>*, std::span<const Image* const>,
                                               std::span<const Image* const>, const ObjectiveWeights&,
                                               nn::ParamSet<float>*, nn::ParamSet<float>*);
template ObjectiveValue batch_objective<double>(const PrimaryNet&, const nn::ParamSet<double>&, const CAENet*,
                                                const nn::ParamSet<double>*, std::span<const Image* const>,
                                                std::span<const Image* const>, const ObjectiveWeights&,
                                                nn::ParamSet<double>*, nn::ParamSet<double>*);

// ---------------------------------------------------------------------------
// Training loop

namespace {

void check_finite(const ObjectiveValue& v, int iteration) {
  const std::pair<const char*, double> terms[] = {
      {"matching", v.matching}, {"smoothness", v.smoothness}, {"cae_recon", v.cae_recon}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) {
      throw TrainingDiverged("training diverged at iteration " + std::to_string(iteration) + ": " + name +
                             " loss is not finite");
    }
  }
}

void zero(nn::ParamSet<float>& g) {
  for (auto& a : g.arrays()) std::fill(a.values.begin(), a.values.end(), 0.0f);
}

}  // namespace

TrainedModel train(const TrainConfig& config, const PairDataset& dataset, const HistoryCallback& on_record) {
  config.validate();
  if (dataset.train.empty()) throw std::invalid_argument("train: dataset has no training pairs");
  const Image& first = dataset.samples.front().image;
  if (first.height() != config.primary.height || first.width() != config.primary.width) {
    throw std::invalid_argument("train: image size does not match the network configuration");
  }

  TrainedModel model;
  model.config = config;
  model.primary = init_primary(config.primary, config.seed);
  if (config.cae) model.cae = init_cae(*config.cae, config.seed + 1);

  const PrimaryNet primary_net(config.primary);
  std::optional<CAENet> cae_net;
  if (config.cae) cae_net.emplace(*config.cae);

  // One optimizer over both parameter sets; the CAE half takes its first
  // step when it first receives a gradient.
  Adam primary_opt(config.learning_rate), cae_opt(config.learning_rate);
  nn::ParamSet<float> d_primary = model.primary.arrays.zeros_like();
  nn::ParamSet<float> d_cae;
  if (model.cae) d_cae = model.cae->arrays.zeros_like();

  Rng sampler(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const int batch = config.batch_size;
  std::vector<const Image*> sources(batch), targets(batch);
  const int warmup = config.warmup_iterations();

  for (int it = 0; it < config.total_iterations; ++it) {
    for (int b = 0; b < batch; ++b) {
      const RegistrationPair& pair = dataset.train[sampler.below(dataset.train.size())];
      sources[b] = &dataset.source(pair).image;
      targets[b] = &dataset.target(pair).image;
    }
    const ObjectiveWeights weights = config.weights_at(it);
    const bool cae_active = model.cae && weights.beta > 0.0;

    zero(d_primary);
    if (cae_active) zero(d_cae);
    ObjectiveValue v;
    try {
      v = batch_objective<float>(primary_net, model.primary.arrays, cae_active ? &*cae_net : nullptr,
                                 cae_active ? &model.cae->arrays : nullptr, sources, targets, weights, &d_primary,
                                 cae_active ? &d_cae : nullptr);
    } catch (const TrainingDiverged& e) {
      throw TrainingDiverged("training diverged at iteration " + std::to_string(it) + ": " + e.what());
    }
    check_finite(v, it);

    primary_opt.step(model.primary.arrays, d_primary);
    if (cae_active) cae_opt.step(model.cae->arrays, d_cae);

    const bool log = it % kHistoryInterval == 0 || it == warmup - 1 || it == warmup || it == config.total_iterations - 1;
    if (log) {
      HistoryRecord r{it, config.phase_at(it), v.matching, v.smoothness, v.cae_recon, v.total, weights.alpha,
                      weights.beta};
      model.history.records.push_back(r);
      if (on_record) on_record(r);
    }
  }
  model.iterations = config.total_iterations;

  if (!model.primary.arrays.all_finite() || (model.cae && !model.cae->arrays.all_finite())) {
    throw TrainingDiverged("training finished with non-finite parameters");
  }
  return model;
}

// ---------------------------------------------------------------------------
// Config JSON

namespace {

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + ": expected a JSON object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw std::invalid_argument(std::string(what) + ": unknown key '" + item.key() + "'");
  }
}

template <typename V>
void read_opt(const nlohmann::json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

}  // namespace

void to_json(nlohmann::json& j, const PrimaryConfig& c) {
  j = {{"levels", c.levels},
       {"base_channels", c.base_channels},
       {"skip_connections", c.skip_connections},
       {"height", c.height},
       {"width", c.width}};
  j["bottleneck_dim"] = c.bottleneck_dim ? nlohmann::json(*c.bottleneck_dim) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, PrimaryConfig& c) {
  reject_unknown_keys(j, {"levels", "base_channels", "skip_connections", "bottleneck_dim", "height", "width"},
                      "primary config");
  c = PrimaryConfig{};
  read_opt(j, "levels", c.levels);
  read_opt(j, "base_channels", c.base_channels);
  read_opt(j, "skip_connections", c.skip_connections);
  read_opt(j, "height", c.height);
  read_opt(j, "width", c.width);
  if (j.contains("bottleneck_dim") && !j.at("bottleneck_dim").is_null()) c.bottleneck_dim = j.at("bottleneck_dim").get<int>();
}

void to_json(nlohmann::json& j, const CAEConfig& c) {
  j = {{"h", c.h}, {"levels", c.levels}, {"base_channels", c.base_channels}, {"height", c.height}, {"width", c.width}};
}

void from_json(const nlohmann::json& j, CAEConfig& c) {
  reject_unknown_keys(j, {"h", "levels", "base_channels", "height", "width"}, "cae config");
  c = CAEConfig{};
  read_opt(j, "h", c.h);
  read_opt(j, "levels", c.levels);
  read_opt(j, "base_channels", c.base_channels);
  read_opt(j, "height", c.height);
  read_opt(j, "width", c.width);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"total_iterations", c.total_iterations},
       {"warmup_fraction", c.warmup_fraction},
       {"warmup_alpha", c.warmup_alpha},
       {"beta", c.beta},
       {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"primary", c.primary},
       {"matching", to_string(c.matching)},
       {"ncc_window", c.ncc_window}};
  j["cae"] = c.cae ? nlohmann::json(*c.cae) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  reject_unknown_keys(j,
                      {"total_iterations", "warmup_fraction", "warmup_alpha", "beta", "learning_rate", "batch_size",
                       "seed", "primary", "cae", "matching", "ncc_window"},
                      "train config");
  c = TrainConfig{};
  read_opt(j, "total_iterations", c.total_iterations);
  read_opt(j, "warmup_fraction", c.warmup_fraction);
  read_opt(j, "warmup_alpha", c.warmup_alpha);
  read_opt(j, "beta", c.beta);
  read_opt(j, "learning_rate", c.learning_rate);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "seed", c.seed);
  read_opt(j, "primary", c.primary);
  read_opt(j, "ncc_window", c.ncc_window);
  if (j.contains("matching")) c.matching = parse_matching_loss(j.at("matching").get<std::string>());
  if (j.contains("cae") && !j.at("cae").is_null()) c.cae = j.at("cae").get<CAEConfig>();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointFormat = "coreg-checkpoint-1";

nlohmann::json save_arrays(const nn::ParamSet<float>& params, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  for (const auto& a : params.arrays()) {
    RawArray raw{1, static_cast<std::uint32_t>(a.values.size()), 1, a.values};
    write_raw(dir / (a.name + ".raw"), raw);
    index.push_back({{"name", a.name}, {"shape", a.shape}});
  }
  return index;
}

nn::ParamSet<float> load_arrays(const nlohmann::json& index, const std::filesystem::path& dir,
                                const std::vector<nn::ArraySpec>& schema) {
  nn::ParamSet<float> params = nn::ParamSet<float>::zeros(schema);
  if (!index.is_array() || index.size() != schema.size()) {
    throw IoError("checkpoint array index does not match the configured architecture: " + dir.string());
  }
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto name = index[i].at("name").get<std::string>();
    const auto shape = index[i].at("shape").get<std::vector<int>>();
    if (name != schema[i].name || shape != schema[i].shape) {
      throw IoError("checkpoint array '" + name + "' does not match the configured architecture");
    }
    RawArray raw = read_raw(dir / (name + ".raw"));
    if (raw.values.size() != params[i].values.size()) throw IoError("checkpoint array '" + name + "' has wrong size");
    params[i].values = std::move(raw.values);
  }
  return params;
}

}  // namespace

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["format"] = kCheckpointFormat;
  meta["config"] = model.config;
  meta["seed"] = model.config.seed;
  meta["iterations"] = model.iterations;
  meta["primary_arrays"] = save_arrays(model.primary.arrays, dir / "primary");
  meta["cae_arrays"] = model.cae ? save_arrays(model.cae->arrays, dir / "cae") : nlohmann::json(nullptr);
  write_history_csv(dir / "history.csv", model.history);
  std::ofstream out(dir / "metadata.json");
  if (!out) throw IoError("cannot write checkpoint metadata in " + dir.string());
  out << meta.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + (dir / "metadata.json").string());
}

TrainedModel load_checkpoint(const std::filesystem::path& dir) {
  const auto meta_path = dir / "metadata.json";
  std::ifstream in(meta_path);
  if (!in) throw IoError("no checkpoint metadata at " + meta_path.string());
  TrainedModel model;
  try {
    const nlohmann::json meta = nlohmann::json::parse(in);
    if (meta.value("format", "") != kCheckpointFormat) throw IoError("unsupported checkpoint format");
    model.config = meta.at("config").get<TrainConfig>();
    model.config.validate();
    model.iterations = meta.at("iterations").get<int>();
    model.primary.config = model.config.primary;
    model.primary.arrays =
        load_arrays(meta.at("primary_arrays"), dir / "primary", PrimaryNet(model.config.primary).schema());
    if (model.config.cae) {
      CAEParams cae{*model.config.cae, {}};
      cae.arrays = load_arrays(meta.at("cae_arrays"), dir / "cae", CAENet(*model.config.cae).schema());
      model.cae = std::move(cae);
    }
  } catch (const std::exception& e) {
    throw IoError("corrupt checkpoint " + dir.string() + ": " + e.what());
  }
  model.history = read_history_csv(dir / "history.csv");
  return model;
}

}  // namespace coreg
