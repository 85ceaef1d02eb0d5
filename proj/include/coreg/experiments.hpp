#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coreg/metrics.hpp"
#include "coreg/synth.hpp"
#include "coreg/training.hpp"

namespace coreg {

enum class Method { cae, undr, undr_bn, undr_bn_noskip };

std::string to_string(Method method);
Method parse_method(const std::string& name);

struct DatasetSpec {
  ShapeFamily family = ShapeFamily::linear;
  int n_shapes = 100;
  std::uint64_t seed = 0;
  std::optional<std::size_t> max_train_pairs;
  bool operator==(const DatasetSpec&) const = default;
};

struct ExperimentSpec {
  std::string name;
  Method method = Method::cae;
  DatasetSpec dataset;
  TrainConfig train;
  std::filesystem::path output_dir;
  /// Latent size of the post-hoc autoencoder fitted to baseline fields.
  int comparison_h = 1;
  PosthocOptions posthoc;
  /// Optional dataset cache root, shared between experiments.
  std::optional<std::filesystem::path> dataset_cache;

  /// Checks the method/architecture consistency rules and the train config.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentSpec& s);
void from_json(const nlohmann::json& j, ExperimentSpec& s);

/// A config file holds either one experiment object or {"experiments": [...]}.
std::vector<ExperimentSpec> load_experiment_specs(const std::filesystem::path& path);

struct ReportRow {
  std::string dataset;
  std::string method;  // e.g. "CAE h=1 beta=8", "UnDR-BN h=1"
  double ae_error_pct = 0.0;
  double dice = 0.0;
  double landmark_error_pct = 0.0;
  double test_runtime_sec = 0.0;
  bool operator==(const ReportRow&) const = default;
};

std::string method_label(const ExperimentSpec& spec);

PairDataset build_experiment_dataset(const ExperimentSpec& spec);

/// Trains per spec; writes config.json, checkpoint/ and history.csv into
/// spec.output_dir.
TrainedModel train_experiment(const ExperimentSpec& spec, const PairDataset& dataset,
                              const HistoryCallback& on_record = {});

/// Evaluates on the test split; writes eval.csv and figures/ into spec.output_dir.
ReportRow evaluate_experiment(const ExperimentSpec& spec, const TrainedModel& model, const PairDataset& dataset);

/// Builds the dataset, trains and evaluates. Errors are rethrown with the
/// experiment name attached.
ReportRow run_experiment(const ExperimentSpec& spec, const HistoryCallback& on_record = {});

struct SweepPoint {
  double param = 0.0;
  double latent = 0.0;
};

/// Registers n uniformly spaced sources of `family` to the centred-bump
/// sample and reads the h = 1 latent of each field. When `strip_png` is given,
/// a 10-sample strip of sources and deformed grids is written there.
std::vector<SweepPoint> latent_sweep(const TrainedModel& model, ShapeFamily family, int n_sources,
                                     const std::optional<std::filesystem::path>& strip_png = std::nullopt);

/// White where both are foreground, green for registered only, magenta for
/// target only, black elsewhere.
RgbImage render_falsecolor(const Image& target, const Image& registered, double threshold = 0.5);

/// Unit grid lines every `spacing` pixels, warped by `field`.
Image render_deformed_grid(const DisplacementField& field, int spacing = 4);

/// Writes `path` as CSV and `path` with extension .txt as an aligned table,
/// both sorted by (dataset, method).
void emit_report(std::vector<ReportRow> rows, const std::filesystem::path& path);
std::vector<ReportRow> read_report_csv(const std::filesystem::path& path);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& points);

}  // namespace coreg
