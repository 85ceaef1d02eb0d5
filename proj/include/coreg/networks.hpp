#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <type_traits>
#include <vector>

#include "coreg/image.hpp"
#include "coreg/nn.hpp"

namespace coreg {

/// U-Net style displacement regressor. `bottleneck_dim` inserts a dense
/// bottleneck at the coarsest level (the UnDR-BN variant).
struct PrimaryConfig {
  int levels = 4;
  int base_channels = 16;
  bool skip_connections = true;
  std::optional<int> bottleneck_dim;
  int height = 64;  // input size; fixes the dense bottleneck shape
  int width = 64;

  void validate() const;
  bool operator==(const PrimaryConfig&) const = default;
};

/// Convolutional autoencoder over displacement fields with an h-unit latent.
struct CAEConfig {
  int h = 1;
  int levels = 3;
  int base_channels = 16;
  int height = 64;
  int width = 64;

  void validate() const;
  bool operator==(const CAEConfig&) const = default;
};

/// Architecture of the primary network with explicit forward/backward passes.
/// Input is (2, N, H, W): channel 0 source, channel 1 target. Output is
/// (2, N, H, W): channel 0 row-offset, channel 1 col-offset.
class PrimaryNet {
 public:
  explicit PrimaryNet(const PrimaryConfig& config);

  const PrimaryConfig& config() const { return config_; }
  const std::vector<nn::ArraySpec>& schema() const { return schema_; }

  template <typename T>
  struct Trace {
    nn::Tensor<T> input;
    std::vector<nn::Tensor<T>> enc_in, enc_mid, enc_out;
    std::vector<std::vector<std::int32_t>> pool_argmax;
    nn::Tensor<T> flat, code, expanded;
    std::vector<nn::Tensor<T>> dec_in, dec_mid, dec_out;
  };

  template <typename T>
  nn::Tensor<T> forward(const nn::ParamSet<T>& params, const nn::Tensor<T>& input,
                        std::type_identity_t<Trace<T>>* trace) const;

  /// Accumulates dL/dparams into `grads` given dL/d(output).
  template <typename T>
  void backward(const nn::ParamSet<T>& params, const Trace<T>& trace, const nn::Tensor<T>& d_output,
                nn::ParamSet<T>& grads) const;

 private:
  struct Stage {
    nn::Conv2d conv1, conv2;
  };

  PrimaryConfig config_;
  std::vector<nn::ArraySpec> schema_;
  std::vector<Stage> encoder_;
  std::vector<Stage> decoder_;  // decoder_[k] produces resolution level k
  std::optional<nn::Dense> squeeze_, expand_;
  nn::Conv2d head_;
  int coarse_channels_ = 0, coarse_h_ = 0, coarse_w_ = 0;
};

/// Architecture of the cooperative autoencoder.
class CAENet {
 public:
  explicit CAENet(const CAEConfig& config);

  const CAEConfig& config() const { return config_; }
  const std::vector<nn::ArraySpec>& schema() const { return schema_; }

  template <typename T>
  struct Trace {
    std::vector<nn::Tensor<T>> enc_in;
    nn::Tensor<T> enc_out, flat, latent, expanded;
    std::vector<nn::Tensor<T>> dec_in;
    nn::Tensor<T> output;
  };

  template <typename T>
  nn::Tensor<T> encode(const nn::ParamSet<T>& params, const nn::Tensor<T>& field,
                       std::type_identity_t<Trace<T>>* trace) const;

  /// (h, N, 1, 1) latent -> (2, N, H, W) reconstruction.
  template <typename T>
  nn::Tensor<T> decode(const nn::ParamSet<T>& params, const nn::Tensor<T>& latent,
                       std::type_identity_t<Trace<T>>* trace) const;

  /// Accumulates parameter gradients and returns dL/d(input field) given
  /// dL/d(reconstruction) and, optionally, dL/d(latent).
  template <typename T>
  nn::Tensor<T> backward(const nn::ParamSet<T>& params, const Trace<T>& trace, const nn::Tensor<T>& d_output,
                         const std::type_identity_t<nn::Tensor<T>>* d_latent, nn::ParamSet<T>& grads) const;

 private:
  CAEConfig config_;
  std::vector<nn::ArraySpec> schema_;
  std::vector<nn::Conv2d> encoder_;
  std::vector<nn::ConvTranspose2d> decoder_;  // applied in order, coarse to fine
  nn::Dense to_latent_, from_latent_;
  int coarse_channels_ = 0, coarse_h_ = 0, coarse_w_ = 0;
};

struct PrimaryParams {
  PrimaryConfig config;
  nn::ParamSet<float> arrays;
};

struct CAEParams {
  CAEConfig config;
  nn::ParamSet<float> arrays;
};

/// Fan-in scaled uniform init with a zero displacement head, so the untrained
/// network outputs a zero field.
PrimaryParams init_primary(const PrimaryConfig& config, std::uint64_t seed);
CAEParams init_cae(const CAEConfig& config, std::uint64_t seed);

DisplacementField primary_forward(const PrimaryParams& params, const Image& source, const Image& target);

struct CAEOutput {
  std::vector<double> latent;
  DisplacementField reconstruction;
};
CAEOutput cae_forward(const CAEParams& params, const DisplacementField& field);
DisplacementField cae_decode(const CAEParams& params, std::span<const double> latent);

// Conversions between the image types and (C, N, H, W) tensors.

template <typename T>
nn::Tensor<T> pack_pairs(std::span<const Image* const> sources, std::span<const Image* const> targets);
template <typename T>
nn::Tensor<T> pack_fields(std::span<const DisplacementField* const> fields);
template <typename T>
DisplacementField unpack_field(const nn::Tensor<T>& tensor, int index);
template <typename T>
void store_field(const DisplacementField& field, int index, nn::Tensor<T>& tensor);

}  // namespace coreg
