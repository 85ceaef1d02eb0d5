#include "coreg/networks.hpp"

#include <stdexcept>
#include <string>

namespace coreg {

using nn::ParamSet;
using nn::Tensor;

void PrimaryConfig::validate() const {
  if (levels < 2) throw std::invalid_argument("PrimaryConfig: levels must be >= 2");
  if (base_channels < 4) throw std::invalid_argument("PrimaryConfig: base_channels must be >= 4");
  if (bottleneck_dim && *bottleneck_dim < 1) throw std::invalid_argument("PrimaryConfig: bottleneck_dim must be >= 1");
  const int div = 1 << (levels - 1);
  if (height < 2 || width < 2 || height % div != 0 || width % div != 0) {
    throw std::invalid_argument("PrimaryConfig: input size must be divisible by 2^(levels-1)");
  }
}

void CAEConfig::validate() const {
  if (h < 1) throw std::invalid_argument("CAEConfig: h must be >= 1");
  if (levels < 1) throw std::invalid_argument("CAEConfig: levels must be >= 1");
  if (base_channels < 1) throw std::invalid_argument("CAEConfig: base_channels must be >= 1");
  const int div = 1 << levels;
  if (height < div || width < div || height % div != 0 || width % div != 0) {
    throw std::invalid_argument("CAEConfig: field size must be divisible by 2^levels");
  }
}

namespace {

constexpr nn::Window kSame3{3, 1, 1};
constexpr nn::Window kDown3{3, 2, 1};
constexpr nn::Window kPoint{1, 1, 0};

std::string stage_name(const char* part, int k, const char* layer) {
  return std::string(part) + std::to_string(k) + "." + layer;
}

}  // namespace

// ---------------------------------------------------------------------------
// Primary network

PrimaryNet::PrimaryNet(const PrimaryConfig& config) : config_(config) {
  config_.validate();
  const int levels = config_.levels;
  auto ch = [&](int k) { return config_.base_channels << k; };

  for (int k = 0; k < levels; ++k) {
    const int in = k == 0 ? 2 : ch(k - 1);
    encoder_.push_back({nn::Conv2d::declare(schema_, stage_name("enc", k, "conv1"), in, ch(k), kSame3),
                        nn::Conv2d::declare(schema_, stage_name("enc", k, "conv2"), ch(k), ch(k), kSame3)});
  }
  coarse_channels_ = ch(levels - 1);
  coarse_h_ = config_.height >> (levels - 1);
  coarse_w_ = config_.width >> (levels - 1);
  if (config_.bottleneck_dim) {
    const int features = coarse_channels_ * coarse_h_ * coarse_w_;
    squeeze_ = nn::Dense::declare(schema_, "bottleneck.squeeze", features, *config_.bottleneck_dim);
    expand_ = nn::Dense::declare(schema_, "bottleneck.expand", *config_.bottleneck_dim, features);
  }
  decoder_.resize(levels - 1);
  for (int k = levels - 2; k >= 0; --k) {
    const int in = ch(k + 1) + (config_.skip_connections ? ch(k) : 0);
    decoder_[k] = {nn::Conv2d::declare(schema_, stage_name("dec", k, "conv1"), in, ch(k), kSame3),
                   nn::Conv2d::declare(schema_, stage_name("dec", k, "conv2"), ch(k), ch(k), kSame3)};
  }
  head_ = nn::Conv2d::declare(schema_, "head", ch(0), 2, kPoint, /*zero_init=*/true);
}

template <typename T>
Tensor<T> PrimaryNet::forward(const ParamSet<T>& p, const Tensor<T>& input,
                              std::type_identity_t<Trace<T>>* trace) const {
  if (input.channels != 2 || input.height != config_.height || input.width != config_.width) {
    throw std::invalid_argument("PrimaryNet: expected a 2-channel input of the configured size");
  }
  Trace<T> local;
  Trace<T>& t = trace ? *trace : local;
  const int levels = config_.levels;
  t.enc_in.resize(levels);
  t.enc_mid.resize(levels);
  t.enc_out.resize(levels);
  t.pool_argmax.resize(levels);
  t.dec_in.resize(levels - 1);
  t.dec_mid.resize(levels - 1);
  t.dec_out.resize(levels - 1);

  t.input = input;
  for (int k = 0; k < levels; ++k) {
    t.enc_in[k] = k == 0 ? input : nn::max_pool2(t.enc_out[k - 1], t.pool_argmax[k]);
    t.enc_mid[k] = encoder_[k].conv1.forward(p, t.enc_in[k]);
    nn::leaky_relu_inplace(t.enc_mid[k]);
    t.enc_out[k] = encoder_[k].conv2.forward(p, t.enc_mid[k]);
    nn::leaky_relu_inplace(t.enc_out[k]);
  }

  Tensor<T> d;
  if (squeeze_) {
    t.flat = nn::flatten(t.enc_out[levels - 1]);
    t.code = squeeze_->forward(p, t.flat);
    t.expanded = expand_->forward(p, t.code);
    nn::leaky_relu_inplace(t.expanded);
    d = nn::unflatten(t.expanded, coarse_channels_, coarse_h_, coarse_w_);
  } else {
    d = t.enc_out[levels - 1];
  }

  for (int k = levels - 2; k >= 0; --k) {
    Tensor<T> up = nn::upsample2(d);
    t.dec_in[k] = config_.skip_connections ? nn::concat_channels(up, t.enc_out[k]) : std::move(up);
    t.dec_mid[k] = decoder_[k].conv1.forward(p, t.dec_in[k]);
    nn::leaky_relu_inplace(t.dec_mid[k]);
    t.dec_out[k] = decoder_[k].conv2.forward(p, t.dec_mid[k]);
    nn::leaky_relu_inplace(t.dec_out[k]);
    d = t.dec_out[k];
  }
  return head_.forward(p, t.dec_out[0]);
}

template <typename T>
void PrimaryNet::backward(const ParamSet<T>& p, const Trace<T>& t, const Tensor<T>& d_output,
                          ParamSet<T>& g) const {
  const int levels = config_.levels;
  auto ch = [&](int k) { return config_.base_channels << k; };

  Tensor<T> dd = head_.backward(p, g, t.dec_out[0], d_output, true);
  std::vector<Tensor<T>> d_enc(levels);
  for (int k = 0; k < levels; ++k) {
    const Tensor<T>& e = t.enc_out[k];
    d_enc[k] = Tensor<T>(e.channels, e.batch, e.height, e.width);
  }

  for (int k = 0; k <= levels - 2; ++k) {
    nn::leaky_relu_backward_inplace(t.dec_out[k], dd);
    Tensor<T> d_mid = decoder_[k].conv2.backward(p, g, t.dec_mid[k], dd, true);
    nn::leaky_relu_backward_inplace(t.dec_mid[k], d_mid);
    Tensor<T> d_in = decoder_[k].conv1.backward(p, g, t.dec_in[k], d_mid, true);
    if (config_.skip_connections) {
      nn::add_inplace(d_enc[k], nn::slice_channels(d_in, ch(k + 1), ch(k)));
      dd = nn::upsample2_backward(nn::slice_channels(d_in, 0, ch(k + 1)));
    } else {
      dd = nn::upsample2_backward(d_in);
    }
  }

  if (squeeze_) {
    Tensor<T> d_expanded = nn::flatten(dd);
    nn::leaky_relu_backward_inplace(t.expanded, d_expanded);
    Tensor<T> d_code = expand_->backward(p, g, t.code, d_expanded, true);
    Tensor<T> d_flat = squeeze_->backward(p, g, t.flat, d_code, true);
    nn::add_inplace(d_enc[levels - 1], nn::unflatten(d_flat, coarse_channels_, coarse_h_, coarse_w_));
  } else {
    nn::add_inplace(d_enc[levels - 1], dd);
  }

  for (int k = levels - 1; k >= 0; --k) {
    nn::leaky_relu_backward_inplace(t.enc_out[k], d_enc[k]);
    Tensor<T> d_mid = encoder_[k].conv2.backward(p, g, t.enc_mid[k], d_enc[k], true);
    nn::leaky_relu_backward_inplace(t.enc_mid[k], d_mid);
    Tensor<T> d_in = encoder_[k].conv1.backward(p, g, t.enc_in[k], d_mid, k > 0);
    if (k > 0) nn::max_pool2_backward(d_in, t.pool_argmax[k], d_enc[k - 1]);
  }
}

// ---------------------------------------------------------------------------
// Cooperative autoencoder

CAENet::CAENet(const CAEConfig& config) : config_(config) {
  config_.validate();
  const int levels = config_.levels;
  auto ch = [&](int k) { return config_.base_channels << k; };
  for (int k = 0; k < levels; ++k) {
    encoder_.push_back(nn::Conv2d::declare(schema_, stage_name("enc", k, "conv"), k == 0 ? 2 : ch(k - 1), ch(k), kDown3));
  }
  coarse_channels_ = ch(levels - 1);
  coarse_h_ = config_.height >> levels;
  coarse_w_ = config_.width >> levels;
  const int features = coarse_channels_ * coarse_h_ * coarse_w_;
  to_latent_ = nn::Dense::declare(schema_, "latent.encode", features, config_.h);
  from_latent_ = nn::Dense::declare(schema_, "latent.decode", config_.h, features);
  for (int k = levels - 1; k >= 0; --k) {
    decoder_.push_back(nn::ConvTranspose2d::declare(schema_, stage_name("dec", k, "deconv"), ch(k),
                                                    k == 0 ? 2 : ch(k - 1), kDown3, /*output_pad=*/1));
  }
}

template <typename T>
Tensor<T> CAENet::encode(const ParamSet<T>& p, const Tensor<T>& field,
                           std::type_identity_t<Trace<T>>* trace) const {
  if (field.channels != 2 || field.height != config_.height || field.width != config_.width) {
    throw std::invalid_argument("CAENet: expected a 2-channel field of the configured size");
  }
  Trace<T> local;
  Trace<T>& t = trace ? *trace : local;
  t.enc_in.resize(encoder_.size());
  Tensor<T> cur = field;
  for (std::size_t k = 0; k < encoder_.size(); ++k) {
    t.enc_in[k] = std::move(cur);
    cur = encoder_[k].forward(p, t.enc_in[k]);
    nn::leaky_relu_inplace(cur);
  }
  t.enc_out = std::move(cur);
  t.flat = nn::flatten(t.enc_out);
  t.latent = to_latent_.forward(p, t.flat);
  return t.latent;
}

template <typename T>
Tensor<T> CAENet::decode(const ParamSet<T>& p, const Tensor<T>& latent,
                           std::type_identity_t<Trace<T>>* trace) const {
  if (latent.channels != config_.h) throw std::invalid_argument("CAENet: latent width does not match h");
  Trace<T> local;
  Trace<T>& t = trace ? *trace : local;
  t.latent = latent;
  t.expanded = from_latent_.forward(p, latent);
  nn::leaky_relu_inplace(t.expanded);
  Tensor<T> cur = nn::unflatten(t.expanded, coarse_channels_, coarse_h_, coarse_w_);
  t.dec_in.resize(decoder_.size());
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    t.dec_in[i] = std::move(cur);
    cur = decoder_[i].forward(p, t.dec_in[i]);
    if (i + 1 < decoder_.size()) nn::leaky_relu_inplace(cur);
  }
  t.output = cur;
  return cur;
}

template <typename T>
Tensor<T> CAENet::backward(const ParamSet<T>& p, const Trace<T>& t, const Tensor<T>& d_output,
                           const std::type_identity_t<Tensor<T>>* d_latent, ParamSet<T>& g) const {
  Tensor<T> d = d_output;
  for (std::size_t i = decoder_.size(); i-- > 0;) {
    if (i + 1 < decoder_.size()) nn::leaky_relu_backward_inplace(t.dec_in[i + 1], d);
    d = decoder_[i].backward(p, g, t.dec_in[i], d, true);
  }
  Tensor<T> d_expanded = nn::flatten(d);
  nn::leaky_relu_backward_inplace(t.expanded, d_expanded);
  Tensor<T> d_lat = from_latent_.backward(p, g, t.latent, d_expanded, true);
  if (d_latent) nn::add_inplace(d_lat, *d_latent);
  Tensor<T> d_flat = to_latent_.backward(p, g, t.flat, d_lat, true);
  d = nn::unflatten(d_flat, coarse_channels_, coarse_h_, coarse_w_);
  for (std::size_t k = encoder_.size(); k-- > 0;) {
    nn::leaky_relu_backward_inplace(k + 1 == encoder_.size() ? t.enc_out : t.enc_in[k + 1], d);
    d = encoder_[k].backward(p, g, t.enc_in[k], d, true);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Value-level API

PrimaryParams init_primary(const PrimaryConfig& config, std::uint64_t seed) {
  PrimaryNet net(config);
  return {config, ParamSet<float>::fan_in_uniform(net.schema(), seed)};
}

CAEParams init_cae(const CAEConfig& config, std::uint64_t seed) {
  CAENet net(config);
  return {config, ParamSet<float>::fan_in_uniform(net.schema(), seed)};
}

DisplacementField primary_forward(const PrimaryParams& params, const Image& source, const Image& target) {
  if (!source.same_shape(target)) throw std::invalid_argument("primary_forward: source and target shapes differ");
  if (source.height() != params.config.height || source.width() != params.config.width) {
    throw std::invalid_argument("primary_forward: image size does not match the network configuration");
  }
  PrimaryNet net(params.config);
  if (!params.arrays.matches(net.schema())) throw std::invalid_argument("primary_forward: parameters do not match config");
  const Image* s[] = {&source};
  const Image* t[] = {&target};
  return unpack_field(net.forward(params.arrays, pack_pairs<float>(s, t), nullptr), 0);
}

CAEOutput cae_forward(const CAEParams& params, const DisplacementField& field) {
  if (field.height() != params.config.height || field.width() != params.config.width) {
    throw std::invalid_argument("cae_forward: field size does not match the autoencoder configuration");
  }
  CAENet net(params.config);
  if (!params.arrays.matches(net.schema())) throw std::invalid_argument("cae_forward: parameters do not match config");
  const DisplacementField* f[] = {&field};
  CAENet::Trace<float> trace;
  const Tensor<float> latent = net.encode(params.arrays, pack_fields<float>(f), &trace);
  const Tensor<float> recon = net.decode(params.arrays, latent, &trace);
  return {std::vector<double>(latent.data.begin(), latent.data.end()), unpack_field(recon, 0)};
}

DisplacementField cae_decode(const CAEParams& params, std::span<const double> latent) {
  CAENet net(params.config);
  if (latent.size() != static_cast<std::size_t>(params.config.h)) {
    throw std::invalid_argument("cae_decode: latent length must equal h");
  }
  Tensor<float> z(params.config.h, 1, 1, 1);
  std::copy(latent.begin(), latent.end(), z.data.begin());
  return unpack_field(net.decode(params.arrays, z, nullptr), 0);
}

template <typename T>
Tensor<T> pack_pairs(std::span<const Image* const> sources, std::span<const Image* const> targets) {
  if (sources.empty() || sources.size() != targets.size()) throw std::invalid_argument("pack_pairs: bad batch");
  const int h = sources[0]->height();
  const int w = sources[0]->width();
  Tensor<T> x(2, static_cast<int>(sources.size()), h, w);
  for (std::size_t b = 0; b < sources.size(); ++b) {
    if (sources[b]->height() != h || sources[b]->width() != w || !targets[b]->same_shape(*sources[b])) {
      throw std::invalid_argument("pack_pairs: inconsistent image sizes");
    }
    std::copy(sources[b]->values().begin(), sources[b]->values().end(), x.plane_ptr(0, static_cast<int>(b)));
    std::copy(targets[b]->values().begin(), targets[b]->values().end(), x.plane_ptr(1, static_cast<int>(b)));
  }
  return x;
}

template <typename T>
Tensor<T> pack_fields(std::span<const DisplacementField* const> fields) {
  if (fields.empty()) throw std::invalid_argument("pack_fields: empty batch");
  Tensor<T> x(2, static_cast<int>(fields.size()), fields[0]->height(), fields[0]->width());
  for (std::size_t b = 0; b < fields.size(); ++b) {
    if (!fields[b]->same_shape(*fields[0])) throw std::invalid_argument("pack_fields: inconsistent sizes");
    store_field(*fields[b], static_cast<int>(b), x);
  }
  return x;
}

template <typename T>
DisplacementField unpack_field(const Tensor<T>& tensor, int index) {
  DisplacementField f(tensor.height, tensor.width);
  const T* rows = tensor.plane_ptr(0, index);
  const T* cols = tensor.plane_ptr(1, index);
  for (int r = 0; r < tensor.height; ++r) {
    for (int c = 0; c < tensor.width; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * tensor.width + c;
      f.row(r, c) = static_cast<double>(rows[i]);
      f.col(r, c) = static_cast<double>(cols[i]);
    }
  }
  return f;
}

template <typename T>
void store_field(const DisplacementField& field, int index, Tensor<T>& tensor) {
  T* rows = tensor.plane_ptr(0, index);
  T* cols = tensor.plane_ptr(1, index);
  for (int r = 0; r < field.height(); ++r) {
    for (int c = 0; c < field.width(); ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * field.width() + c;
      rows[i] = static_cast<T>(field.row(r, c));
      cols[i] = static_cast<T>(field.col(r, c));
    }
  }
}

#define COREG_INSTANTIATE(T)                                                                                      \
  template Tensor<T> PrimaryNet::forward(const ParamSet<T>&, const Tensor<T>&, Trace<T>*) const;                 \
  template void PrimaryNet::backward(const ParamSet<T>&, const Trace<T>&, const Tensor<T>&, ParamSet<T>&) const; \
  template Tensor<T> CAENet::encode(const ParamSet<T>&, const Tensor<T>&, Trace<T>*) const;                      \
  template Tensor<T> CAENet::decode(const ParamSet<T>&, const Tensor<T>&, Trace<T>*) const;                      \
  template Tensor<T> CAENet::backward(const ParamSet<T>&, const Trace<T>&, const Tensor<T>&, const Tensor<T>*,   \
                                      ParamSet<T>&) const;                                                       \
  template Tensor<T> pack_pairs<T>(std::span<const Image* const>, std::span<const Image* const>);                 \
  template Tensor<T> pack_fields<T>(std::span<const DisplacementField* const>);                                  \
  template DisplacementField unpack_field<T>(const Tensor<T>&, int);                                             \
  template void store_field<T>(const DisplacementField&, int, Tensor<T>&);

COREG_INSTANTIATE(float)
COREG_INSTANTIATE(double)

#undef COREG_INSTANTIATE

}  // namespace coreg
