#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coreg/networks.hpp"
#include "coreg/objectives.hpp"
#include "coreg/synth.hpp"

namespace coreg {

struct TrainConfig {
  int total_iterations = 20000;
  double warmup_fraction = 0.05;
  double warmup_alpha = 0.1;
  double beta = 8.0;
  double learning_rate = 1e-4;
  int batch_size = 16;
  std::uint64_t seed = 0;
  PrimaryConfig primary;
  std::optional<CAEConfig> cae;  // none = UnDR / UnDR-BN baselines
  MatchingLoss matching = MatchingLoss::l2;
  int ncc_window = 9;

  void validate() const;

  /// Number of warm-up iterations: every iteration i < warmup_fraction * total.
  int warmup_iterations() const;
  int phase_at(int iteration) const { return iteration < warmup_iterations() ? 1 : 2; }
  /// Effective weights at `iteration` (0-based).
  ObjectiveWeights weights_at(int iteration) const;

  bool operator==(const TrainConfig&) const = default;
};

inline constexpr int kHistoryInterval = 100;

struct HistoryRecord {
  int iteration = 0;
  int phase = 1;
  double matching = 0.0;
  double smoothness = 0.0;
  double cae_recon = 0.0;
  double total = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  bool operator==(const HistoryRecord&) const = default;
};

struct TrainHistory {
  std::vector<HistoryRecord> records;
  bool operator==(const TrainHistory&) const = default;
};

/// CSV with header iteration,phase,matching,smoothness,cae_recon,total,alpha,beta.
/// Reals are written with 17 significant digits so the file round-trips.
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);
TrainHistory read_history_csv(const std::filesystem::path& path);

struct TrainedModel {
  TrainConfig config;
  PrimaryParams primary;
  std::optional<CAEParams> cae;
  TrainHistory history;
  int iterations = 0;
};

/// Raised when a loss term becomes non-finite; the message names the term.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam with PyTorch defaults (beta1 0.9, beta2 0.999, eps 1e-8). Moments are
/// created on the first step, so a parameter set that has not yet received a
/// gradient keeps a step count of zero.
class Adam {
 public:
  explicit Adam(double learning_rate) : lr_(learning_rate) {}

  void step(nn::ParamSet<float>& params, const nn::ParamSet<float>& grads);
  long steps() const { return steps_; }

 private:
  double lr_;
  long steps_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

/// Mean objective over a batch of (source, target) pairs. The primary network
/// produces the fields; the CAE, when given, produces the reconstructions
/// (otherwise the reconstruction is the field itself, so cae_recon is 0).
/// When `d_primary` is non-null, parameter gradients are accumulated into it
/// and, if a CAE is given, into `d_cae`.
template <typename T>
ObjectiveValue batch_objective(const PrimaryNet& primary_net, const nn::ParamSet<T>& primary,
                               const CAENet* cae_net, const nn::ParamSet<T>* cae,
                               std::span<const Image* const> sources, std::span<const Image* const> targets,
                               const ObjectiveWeights& weights, nn::ParamSet<T>* d_primary,
                               nn::ParamSet<T>* d_cae);

using HistoryCallback = std::function<void(const HistoryRecord&)>;

/// Two-phase training on dataset.train. Throws TrainingDiverged on a
/// non-finite loss.
TrainedModel train(const TrainConfig& config, const PairDataset& dataset, const HistoryCallback& on_record = {});

/// Directory with metadata.json, history.csv and one raw file per parameter
/// array under primary/ and cae/.
void save_checkpoint(const TrainedModel& model, const std::filesystem::path& dir);
TrainedModel load_checkpoint(const std::filesystem::path& dir);

void to_json(nlohmann::json& j, const PrimaryConfig& c);
void from_json(const nlohmann::json& j, PrimaryConfig& c);
void to_json(nlohmann::json& j, const CAEConfig& c);
void from_json(const nlohmann::json& j, CAEConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace coreg
