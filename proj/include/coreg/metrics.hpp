#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "coreg/image.hpp"
#include "coreg/networks.hpp"
#include "coreg/synth.hpp"
#include "coreg/training.hpp"

namespace coreg {

struct EvalResult {
  double dice_mean = 0.0;
  double landmark_error_pct = 0.0;  // % of bump width
  double ae_error_pct = 0.0;
  double test_runtime_sec = 0.0;  // mean per-pair forward time
  int n_pairs = 0;
};

/// 2|A∩B| / (|A|+|B|) over {pixel >= threshold}; 1 when both sets are empty.
double dice(const Image& a, const Image& b, double threshold = 0.5);

/// Mean distance between l_T + field(l_T) and l_S over corresponding
/// landmarks, as a percentage of `bump_width`.
double landmark_error(const DisplacementField& field, std::span<const Coordinate> target_landmarks,
                      std::span<const Coordinate> source_landmarks, double bump_width);
double landmark_error(const DisplacementField& field, const PairDataset& dataset, const RegistrationPair& pair);

/// Mean over pairs of ||field - reconstruction|| / ||field|| x 100. Zero-norm
/// fields are skipped with a warning on stderr; `skipped` receives their count.
double ae_relative_error(std::span<const DisplacementField> fields,
                         std::span<const DisplacementField> reconstructions, std::size_t* skipped = nullptr);

struct PosthocOptions {
  int iterations = 5000;
  double learning_rate = 1e-4;
  int batch_size = 16;
  int levels = 3;
  int base_channels = 16;
};

struct PosthocFit {
  CAEParams params;
  double error_pct = 0.0;
};

/// Fits a fresh autoencoder with an h-unit latent to `fields` by minimising
/// the mean squared reconstruction error, then reports ae_relative_error on
/// the same fields. Throws TrainingDiverged on a non-finite loss.
PosthocFit posthoc_ae_fit(std::span<const DisplacementField> fields, int h, std::uint64_t seed,
                          const PosthocOptions& options = {});

/// Reconstructions of `fields` by a trained autoencoder.
std::vector<DisplacementField> reconstruct_fields(const CAEParams& cae, std::span<const DisplacementField> fields);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

/// Fields predicted for `pairs` together with Dice, landmark error and the
/// mean single-pair forward time. ae_error_pct is left at 0.
struct RegistrationEval {
  EvalResult result;
  std::vector<DisplacementField> fields;
};
RegistrationEval evaluate_registration(const PrimaryParams& primary, const PairDataset& dataset,
                                       std::span<const RegistrationPair> pairs);

}  // namespace coreg
