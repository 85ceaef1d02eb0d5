#include "coreg/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "coreg/fields.hpp"
#include "coreg/random.hpp"

namespace coreg {

double dice(const Image& a, const Image& b, double threshold) {
  if (!a.same_shape(b)) throw std::invalid_argument("dice: image shapes differ");
  auto va = a.values(), vb = b.values();
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const bool in_a = va[i] >= threshold, in_b = vb[i] >= threshold;
    na += in_a;
    nb += in_b;
    both += in_a && in_b;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double landmark_error(const DisplacementField& field, std::span<const Coordinate> target_landmarks,
                      std::span<const Coordinate> source_landmarks, double bump_width) {
  if (target_landmarks.size() != source_landmarks.size() || target_landmarks.empty()) {
    throw std::invalid_argument("landmark_error: landmark lists must be non-empty and of equal length");
  }
  if (!(bump_width > 0.0)) throw std::invalid_argument("landmark_error: bump_width must be positive");
  double sum = 0.0;
  for (std::size_t i = 0; i < target_landmarks.size(); ++i) {
    const Coordinate t = target_landmarks[i];
    if (!(t.row >= 0.0 && t.row <= field.height() - 1 && t.col >= 0.0 && t.col <= field.width() - 1)) {
      throw std::invalid_argument("landmark_error: landmark outside the image");
    }
    const Coordinate d = sample_field(field, t);
    sum += std::hypot(t.row + d.row - source_landmarks[i].row, t.col + d.col - source_landmarks[i].col);
  }
  return 100.0 * sum / static_cast<double>(target_landmarks.size()) / bump_width;
}

double landmark_error(const DisplacementField& field, const PairDataset& dataset, const RegistrationPair& pair) {
  return landmark_error(field, dataset.target(pair).landmarks, dataset.source(pair).landmarks, dataset.bump_width);
}

double ae_relative_error(std::span<const DisplacementField> fields, std::span<const DisplacementField> reconstructions,
                         std::size_t* skipped) {
  if (fields.size() != reconstructions.size()) throw std::invalid_argument("ae_relative_error: list sizes differ");
  double sum = 0.0;
  std::size_t used = 0, zero = 0;
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (!fields[k].same_shape(reconstructions[k])) throw std::invalid_argument("ae_relative_error: shapes differ");
    auto f = fields[k].values(), r = reconstructions[k].values();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      num += (f[i] - r[i]) * (f[i] - r[i]);
      den += f[i] * f[i];
    }
    if (den == 0.0) {
      ++zero;
      continue;
    }
    sum += std::sqrt(num / den);
    ++used;
  }
  if (skipped) *skipped = zero;
  if (used == 0) throw std::invalid_argument("ae_relative_error: every field has zero norm");
  if (zero > 0) std::cerr << "warning: ae_relative_error skipped " << zero << " zero-norm field(s)\n";
  return 100.0 * sum / static_cast<double>(used);
}

std::vector<DisplacementField> reconstruct_fields(const CAEParams& cae, std::span<const DisplacementField> fields) {
  const CAENet net(cae.config);
  if (!cae.arrays.matches(net.schema())) throw std::invalid_argument("reconstruct_fields: parameters do not match config");
  std::vector<DisplacementField> out;
  out.reserve(fields.size());
  constexpr std::size_t kChunk = 32;
  for (std::size_t start = 0; start < fields.size(); start += kChunk) {
    const std::size_t end = std::min(fields.size(), start + kChunk);
    std::vector<const DisplacementField*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&fields[i]);
    const nn::Tensor<float> x = pack_fields<float>(batch);
    const nn::Tensor<float> y = net.decode(cae.arrays, net.encode(cae.arrays, x, nullptr), nullptr);
    for (std::size_t i = 0; i < batch.size(); ++i) out.push_back(unpack_field(y, static_cast<int>(i)));
  }
  return out;
}

PosthocFit posthoc_ae_fit(std::span<const DisplacementField> fields, int h, std::uint64_t seed,
                          const PosthocOptions& options) {
  if (fields.empty()) throw std::invalid_argument("posthoc_ae_fit: no fields");
  if (options.iterations < 1 || options.batch_size < 1) throw std::invalid_argument("posthoc_ae_fit: bad options");
  CAEConfig config;
  config.h = h;
  config.levels = options.levels;
  config.base_channels = options.base_channels;
  config.height = fields[0].height();
  config.width = fields[0].width();
  config.validate();

  PosthocFit fit{init_cae(config, seed), 0.0};
  const CAENet net(config);
  Adam opt(options.learning_rate);
  nn::ParamSet<float> grads = fit.params.arrays.zeros_like();
  Rng sampler(seed ^ 0x5851f42d4c957f2dULL);
  std::vector<const DisplacementField*> batch(options.batch_size);
  for (int it = 0; it < options.iterations; ++it) {
    for (auto& f : batch) f = &fields[sampler.below(fields.size())];
    const nn::Tensor<float> x = pack_fields<float>(batch);
    CAENet::Trace<float> trace;
    const nn::Tensor<float> y = net.decode(fit.params.arrays, net.encode(fit.params.arrays, x, &trace), &trace);
    nn::Tensor<float> dy(2, x.batch, x.height, x.width);
    const double scale = 2.0 / static_cast<double>(x.data.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      const double d = static_cast<double>(y.data[i]) - x.data[i];
      loss += d * d;
      dy.data[i] = static_cast<float>(scale * d);
    }
    if (!std::isfinite(loss)) {
      throw TrainingDiverged("post-hoc autoencoder fit diverged at iteration " + std::to_string(it) +
                             ": reconstruction loss is not finite");
    }
    for (auto& a : grads.arrays()) std::fill(a.values.begin(), a.values.end(), 0.0f);
    net.backward(fit.params.arrays, trace, dy, nullptr, grads);
    opt.step(fit.params.arrays, grads);
  }
  const auto recon = reconstruct_fields(fit.params, fields);
  fit.error_pct = ae_relative_error(fields, recon);
  return fit;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need two equal-length series");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

RegistrationEval evaluate_registration(const PrimaryParams& primary, const PairDataset& dataset,
                                       std::span<const RegistrationPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_registration: no pairs");
  RegistrationEval eval;
  eval.fields.reserve(pairs.size());
  double dice_sum = 0.0, landmark_sum = 0.0, seconds = 0.0;
  for (const auto& pair : pairs) {
    const Image& source = dataset.source(pair).image;
    const Image& target = dataset.target(pair).image;
    const auto t0 = std::chrono::steady_clock::now();
    DisplacementField field = primary_forward(primary, source, target);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    dice_sum += dice(warp_image(source, field), target);
    landmark_sum += landmark_error(field, dataset, pair);
    eval.fields.push_back(std::move(field));
  }
  const double n = static_cast<double>(pairs.size());
  eval.result.dice_mean = dice_sum / n;
  eval.result.landmark_error_pct = landmark_sum / n;
  eval.result.test_runtime_sec = seconds / n;
  eval.result.n_pairs = static_cast<int>(pairs.size());
  return eval;
}

}  // namespace coreg
