#pragma once

// Minimal convolutional-network building blocks with explicit backward passes.
//
// Activations are stored channel-major over the batch (C, N, H, W): channel c
// of every sample forms one contiguous (N*H*W) row. With that layout a
// convolution is a single GEMM, W[out x K] * col[K x N*H*W], whose result is
// already the output tensor, and channel concatenation is an append.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "coreg/random.hpp"

namespace coreg::nn {

template <typename T>
struct Tensor {
  int channels = 0;
  int batch = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c, int n, int h, int w)
      : channels(c), batch(n), height(h), width(w), data(static_cast<std::size_t>(c) * n * h * w, T(0)) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t row_size() const { return static_cast<std::size_t>(batch) * plane(); }
  T* plane_ptr(int c, int b) { return data.data() + (static_cast<std::size_t>(c) * batch + b) * plane(); }
  const T* plane_ptr(int c, int b) const {
    return data.data() + (static_cast<std::size_t>(c) * batch + b) * plane();
  }
  T& at(int c, int b, int y, int x) { return plane_ptr(c, b)[static_cast<std::size_t>(y) * width + x]; }
  T at(int c, int b, int y, int x) const { return plane_ptr(c, b)[static_cast<std::size_t>(y) * width + x]; }
  bool same_shape(const Tensor& o) const {
    return channels == o.channels && batch == o.batch && height == o.height && width == o.width;
  }
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<T> values;
  bool operator==(const NamedArray&) const = default;
};

struct ArraySpec {
  std::string name;
  std::vector<int> shape;
  int fan_in = 0;  // 0 = zero-initialised
};

inline std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

template <typename T>
class ParamSet {
 public:
  ParamSet() = default;

  /// Zero-filled arrays for every spec.
  static ParamSet zeros(const std::vector<ArraySpec>& specs) {
    ParamSet p;
    for (const auto& s : specs) p.arrays_.push_back({s.name, s.shape, std::vector<T>(shape_size(s.shape), T(0))});
    return p;
  }

  /// Fan-in scaled uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in)); arrays
  /// with fan_in == 0 stay zero. Draws are consumed in spec order.
  static ParamSet fan_in_uniform(const std::vector<ArraySpec>& specs, std::uint64_t seed) {
    ParamSet p = zeros(specs);
    Rng rng(seed);
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (specs[i].fan_in <= 0) continue;
      const double bound = std::sqrt(6.0 / specs[i].fan_in);
      for (T& v : p.arrays_[i].values) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    return p;
  }

  std::vector<NamedArray<T>>& arrays() { return arrays_; }
  const std::vector<NamedArray<T>>& arrays() const { return arrays_; }
  NamedArray<T>& operator[](std::size_t i) { return arrays_[i]; }
  const NamedArray<T>& operator[](std::size_t i) const { return arrays_[i]; }

  const NamedArray<T>* find(std::string_view name) const {
    for (const auto& a : arrays_) {
      if (a.name == name) return &a;
    }
    return nullptr;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& a : arrays_) n += a.values.size();
    return n;
  }

  ParamSet zeros_like() const {
    ParamSet z = *this;
    for (auto& a : z.arrays_) std::fill(a.values.begin(), a.values.end(), T(0));
    return z;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& a : arrays_) {
      out.arrays().push_back({a.name, a.shape, std::vector<U>(a.values.begin(), a.values.end())});
    }
    return out;
  }

  bool all_finite() const {
    for (const auto& a : arrays_) {
      for (T v : a.values) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }

  /// Checks names and shapes against a schema.
  bool matches(const std::vector<ArraySpec>& specs) const {
    if (specs.size() != arrays_.size()) return false;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (specs[i].name != arrays_[i].name || specs[i].shape != arrays_[i].shape ||
          arrays_[i].values.size() != shape_size(specs[i].shape)) {
        return false;
      }
    }
    return true;
  }

  bool operator==(const ParamSet&) const = default;

 private:
  std::vector<NamedArray<T>> arrays_;
};

// ---------------------------------------------------------------------------
// im2col / col2im

struct Window {
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
};

/// Output rows are addressed as units u = b*oh + oy; a column block covers
/// the units [u0, u1), i.e. columns [u0*ow, u1*ow) of the full col matrix.
/// col[(c*k + ky)*k + kx][(u - u0)*ow + ox] = x[c][b][oy*s - p + ky][ox*s - p + kx] (0 outside).
template <typename T>
void im2col(const Tensor<T>& x, const Window& win, int oh, int ow, int u0, int u1, T* col) {
  const int k = win.kernel;
  T* dst = col;
  for (int c = 0; c < x.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (int u = u0; u < u1; ++u) {
          const int b = u / oh;
          const int oy = u - b * oh;
          const int iy = oy * win.stride - win.pad + ky;
          if (iy < 0 || iy >= x.height) {
            std::fill(dst, dst + ow, T(0));
            dst += ow;
            continue;
          }
          const T* row = x.plane_ptr(c, b) + static_cast<std::size_t>(iy) * x.width;
          if (win.stride == 1) {
            const int shift = kx - win.pad;
            const int lo = std::min(ow, std::max(0, -shift));
            const int hi = std::max(lo, std::min(ow, x.width - shift));
            std::fill(dst, dst + lo, T(0));
            std::copy(row + lo + shift, row + hi + shift, dst + lo);
            std::fill(dst + hi, dst + ow, T(0));
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * win.stride - win.pad + kx;
              dst[ox] = (ix >= 0 && ix < x.width) ? row[ix] : T(0);
            }
          }
          dst += ow;
        }
      }
    }
  }
}

template <typename T>
void im2col(const Tensor<T>& x, const Window& win, int oh, int ow, std::vector<T>& col) {
  col.resize(static_cast<std::size_t>(x.channels) * win.kernel * win.kernel * x.batch * oh * ow);
  im2col(x, win, oh, ow, 0, x.batch * oh, col.data());
}

/// Adjoint of im2col over the units [u0, u1): accumulates col into dx.
template <typename T>
void col2im(const T* col, const Window& win, int oh, int ow, int u0, int u1, Tensor<T>& dx) {
  const int k = win.kernel;
  const T* src = col;
  for (int c = 0; c < dx.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (int u = u0; u < u1; ++u) {
          const int b = u / oh;
          const int oy = u - b * oh;
          const int iy = oy * win.stride - win.pad + ky;
          if (iy < 0 || iy >= dx.height) {
            src += ow;
            continue;
          }
          T* row = dx.plane_ptr(c, b) + static_cast<std::size_t>(iy) * dx.width;
          if (win.stride == 1) {
            const int shift = kx - win.pad;
            const int lo = std::max(0, -shift);
            const int hi = std::min(ow, dx.width - shift);
            for (int ox = lo; ox < hi; ++ox) row[ox + shift] += src[ox];
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * win.stride - win.pad + kx;
              if (ix >= 0 && ix < dx.width) row[ix] += src[ox];
            }
          }
          src += ow;
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const Window& win, int oh, int ow, Tensor<T>& dx) {
  col2im(col, win, oh, ow, 0, dx.batch * oh, dx);
}

/// Output-row units per block so that a K-row column block stays cache sized.
inline int units_per_block(std::size_t kdim, int ow) {
  constexpr std::size_t kBlockElems = 48 * 1024;
  const std::size_t units = kBlockElems / std::max<std::size_t>(1, kdim * ow);
  return static_cast<int>(std::max<std::size_t>(1, units));
}

template <typename T>
using StridedMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

template <typename T>
std::vector<T>& scratch_buffer() {
  thread_local std::vector<T> buffer;
  return buffer;
}

template <typename T>
void add_channel_bias(Tensor<T>& y, const std::vector<T>& bias) {
  const std::size_t n = y.row_size();
  for (int c = 0; c < y.channels; ++c) {
    T* row = y.data.data() + c * n;
    const T b = bias[c];
    for (std::size_t i = 0; i < n; ++i) row[i] += b;
  }
}

template <typename T>
void accumulate_channel_sums(const Tensor<T>& dy, std::vector<T>& dbias) {
  const std::size_t n = dy.row_size();
  for (int c = 0; c < dy.channels; ++c) {
    const T* row = dy.data.data() + c * n;
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) s += row[i];
    dbias[c] += s;
  }
}

// ---------------------------------------------------------------------------
// Layers. Each layer refers to its parameters by index into a ParamSet whose
// layout is fixed by the owning network's schema.

/// k×k convolution, weight [out, in, k, k], bias [out].
struct Conv2d {
  int in = 0;
  int out = 0;
  Window win;
  std::size_t weight = 0;
  std::size_t bias = 0;

  static Conv2d declare(std::vector<ArraySpec>& specs, const std::string& name, int in, int out, Window win,
                        bool zero_init = false) {
    Conv2d l{in, out, win, specs.size(), specs.size() + 1};
    const int fan_in = zero_init ? 0 : in * win.kernel * win.kernel;
    specs.push_back({name + ".weight", {out, in, win.kernel, win.kernel}, fan_in});
    specs.push_back({name + ".bias", {out}, 0});
    return l;
  }

  template <typename T>
  Tensor<T> forward(const ParamSet<T>& p, const Tensor<T>& x) const {
    const int oh = win.out_size(x.height);
    const int ow = win.out_size(x.width);
    Tensor<T> y(out, x.batch, oh, ow);
    const std::size_t n = y.row_size();
    const std::size_t kdim = static_cast<std::size_t>(in) * win.kernel * win.kernel;
    ConstMatrixMap<T> w(p[weight].values.data(), out, kdim);
    if (pointwise()) {
      MatrixMap<T>(y.data.data(), out, n).noalias() = w * ConstMatrixMap<T>(x.data.data(), kdim, n);
    } else {
      const int units = x.batch * oh;
      const int step = units_per_block(kdim, ow);
      auto& col = scratch_buffer<T>();
      col.resize(kdim * static_cast<std::size_t>(step) * ow);
      for (int u0 = 0; u0 < units; u0 += step) {
        const int u1 = std::min(units, u0 + step);
        const Eigen::Index len = static_cast<Eigen::Index>(u1 - u0) * ow;
        im2col(x, win, oh, ow, u0, u1, col.data());
        StridedMap<T>(y.data.data() + static_cast<std::size_t>(u0) * ow, out, len, Eigen::OuterStride<>(n))
            .noalias() = w * ConstMatrixMap<T>(col.data(), kdim, len);
      }
    }
    add_channel_bias(y, p[bias].values);
    return y;
  }

  /// Accumulates parameter gradients; returns dL/dx when `need_dx`.
  template <typename T>
  Tensor<T> backward(const ParamSet<T>& p, ParamSet<T>& g, const Tensor<T>& x, const Tensor<T>& dy,
                     bool need_dx) const {
    const std::size_t n = dy.row_size();
    const std::size_t kdim = static_cast<std::size_t>(in) * win.kernel * win.kernel;
    MatrixMap<T> dw(g[weight].values.data(), out, kdim);
    ConstMatrixMap<T> w(p[weight].values.data(), out, kdim);
    accumulate_channel_sums(dy, g[bias].values);
    Tensor<T> dx;
    if (need_dx) dx = Tensor<T>(in, x.batch, x.height, x.width);
    if (pointwise()) {
      ConstMatrixMap<T> dym(dy.data.data(), out, n);
      dw.noalias() += dym * ConstMatrixMap<T>(x.data.data(), kdim, n).transpose();
      if (need_dx) MatrixMap<T>(dx.data.data(), kdim, n).noalias() = w.transpose() * dym;
      return dx;
    }
    const int oh = dy.height;
    const int ow = dy.width;
    const int units = x.batch * oh;
    const int step = units_per_block(kdim, ow);
    auto& col = scratch_buffer<T>();
    col.resize(kdim * static_cast<std::size_t>(step) * ow);
    for (int u0 = 0; u0 < units; u0 += step) {
      const int u1 = std::min(units, u0 + step);
      const Eigen::Index len = static_cast<Eigen::Index>(u1 - u0) * ow;
      ConstStridedMap<T> dyb(dy.data.data() + static_cast<std::size_t>(u0) * ow, out, len, Eigen::OuterStride<>(n));
      im2col(x, win, oh, ow, u0, u1, col.data());
      MatrixMap<T> cm(col.data(), kdim, len);
      dw.noalias() += dyb * cm.transpose();
      if (need_dx) {
        cm.noalias() = w.transpose() * dyb;
        col2im(col.data(), win, oh, ow, u0, u1, dx);
      }
    }
    return dx;
  }

  bool pointwise() const { return win.kernel == 1 && win.stride == 1 && win.pad == 0; }
};

/// Transposed convolution (adjoint of a strided convolution), weight
/// [in, out, k, k], bias [out]. Output size (in-1)*s - 2p + k + output_pad.
struct ConvTranspose2d {
  int in = 0;
  int out = 0;
  Window win;
  int output_pad = 0;
  std::size_t weight = 0;
  std::size_t bias = 0;

  static ConvTranspose2d declare(std::vector<ArraySpec>& specs, const std::string& name, int in, int out, Window win,
                                 int output_pad) {
    ConvTranspose2d l{in, out, win, output_pad, specs.size(), specs.size() + 1};
    const int fan_in = std::max(1, in * win.kernel * win.kernel / (win.stride * win.stride));
    specs.push_back({name + ".weight", {in, out, win.kernel, win.kernel}, fan_in});
    specs.push_back({name + ".bias", {out}, 0});
    return l;
  }

  int out_size(int n) const { return (n - 1) * win.stride - 2 * win.pad + win.kernel + output_pad; }

  template <typename T>
  Tensor<T> forward(const ParamSet<T>& p, const Tensor<T>& x) const {
    Tensor<T> y(out, x.batch, out_size(x.height), out_size(x.width));
    if (win.out_size(y.height) != x.height || win.out_size(y.width) != x.width) {
      throw std::logic_error("ConvTranspose2d: inconsistent geometry");
    }
    const std::size_t n = x.row_size();
    const std::size_t kdim = static_cast<std::size_t>(out) * win.kernel * win.kernel;
    auto& col = scratch_buffer<T>();
    col.resize(kdim * n);
    MatrixMap<T>(col.data(), kdim, n).noalias() =
        ConstMatrixMap<T>(p[weight].values.data(), in, kdim).transpose() * ConstMatrixMap<T>(x.data.data(), in, n);
    col2im(col.data(), win, x.height, x.width, y);
    add_channel_bias(y, p[bias].values);
    return y;
  }

  template <typename T>
  Tensor<T> backward(const ParamSet<T>& p, ParamSet<T>& g, const Tensor<T>& x, const Tensor<T>& dy,
                     bool need_dx) const {
    const std::size_t n = x.row_size();
    const std::size_t kdim = static_cast<std::size_t>(out) * win.kernel * win.kernel;
    accumulate_channel_sums(dy, g[bias].values);
    auto& col = scratch_buffer<T>();
    im2col(dy, win, x.height, x.width, col);
    ConstMatrixMap<T> dcol(col.data(), kdim, n);
    MatrixMap<T>(g[weight].values.data(), in, kdim).noalias() +=
        ConstMatrixMap<T>(x.data.data(), in, n) * dcol.transpose();
    Tensor<T> dx;
    if (!need_dx) return dx;
    dx = Tensor<T>(in, x.batch, x.height, x.width);
    MatrixMap<T>(dx.data.data(), in, n).noalias() = ConstMatrixMap<T>(p[weight].values.data(), in, kdim) * dcol;
    return dx;
  }
};

/// Fully connected layer on a (features, N, 1, 1) tensor, weight [out, in], bias [out].
struct Dense {
  int in = 0;
  int out = 0;
  std::size_t weight = 0;
  std::size_t bias = 0;

  static Dense declare(std::vector<ArraySpec>& specs, const std::string& name, int in, int out) {
    Dense l{in, out, specs.size(), specs.size() + 1};
    specs.push_back({name + ".weight", {out, in}, in});
    specs.push_back({name + ".bias", {out}, 0});
    return l;
  }

  template <typename T>
  Tensor<T> forward(const ParamSet<T>& p, const Tensor<T>& x) const {
    Tensor<T> y(out, x.batch, 1, 1);
    MatrixMap<T>(y.data.data(), out, x.batch).noalias() =
        ConstMatrixMap<T>(p[weight].values.data(), out, in) * ConstMatrixMap<T>(x.data.data(), in, x.batch);
    add_channel_bias(y, p[bias].values);
    return y;
  }

  template <typename T>
  Tensor<T> backward(const ParamSet<T>& p, ParamSet<T>& g, const Tensor<T>& x, const Tensor<T>& dy,
                     bool need_dx) const {
    ConstMatrixMap<T> dym(dy.data.data(), out, dy.batch);
    accumulate_channel_sums(dy, g[bias].values);
    MatrixMap<T>(g[weight].values.data(), out, in).noalias() +=
        dym * ConstMatrixMap<T>(x.data.data(), in, x.batch).transpose();
    Tensor<T> dx;
    if (!need_dx) return dx;
    dx = Tensor<T>(in, x.batch, 1, 1);
    MatrixMap<T>(dx.data.data(), in, x.batch).noalias() =
        ConstMatrixMap<T>(p[weight].values.data(), out, in).transpose() * dym;
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Parameter-free operations

inline constexpr double kLeakySlope = 0.2;

template <typename T>
void leaky_relu_inplace(Tensor<T>& x) {
  const T slope = static_cast<T>(kLeakySlope);
  for (T& v : x.data) v = v > T(0) ? v : slope * v;
}

/// Uses the activation output (its sign matches the input's).
template <typename T>
void leaky_relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy) {
  const T slope = static_cast<T>(kLeakySlope);
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    if (!(y.data[i] > T(0))) dy.data[i] *= slope;
  }
}

/// 2×2 max pooling; `argmax` receives the flat in-plane index of each winner.
template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x, std::vector<std::int32_t>& argmax) {
  Tensor<T> y(x.channels, x.batch, x.height / 2, x.width / 2);
  argmax.resize(y.data.size());
  std::size_t o = 0;
  for (int c = 0; c < x.channels; ++c) {
    for (int b = 0; b < x.batch; ++b) {
      const T* src = x.plane_ptr(c, b);
      for (int oy = 0; oy < y.height; ++oy) {
        for (int ox = 0; ox < y.width; ++ox, ++o) {
          std::int32_t best = (2 * oy) * x.width + 2 * ox;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::int32_t idx = (2 * oy + dy) * x.width + 2 * ox + dx;
              if (src[idx] > src[best]) best = idx;
            }
          }
          argmax[o] = best;
          y.data[o] = src[best];
        }
      }
    }
  }
  return y;
}

template <typename T>
void max_pool2_backward(const Tensor<T>& dy, const std::vector<std::int32_t>& argmax, Tensor<T>& dx) {
  std::size_t o = 0;
  for (int c = 0; c < dy.channels; ++c) {
    for (int b = 0; b < dy.batch; ++b) {
      T* dst = dx.plane_ptr(c, b);
      for (std::size_t i = 0; i < dy.plane(); ++i, ++o) dst[argmax[o]] += dy.data[o];
    }
  }
}

/// Nearest-neighbour 2× upsampling.
template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
  Tensor<T> y(x.channels, x.batch, 2 * x.height, 2 * x.width);
  for (int c = 0; c < x.channels; ++c) {
    for (int b = 0; b < x.batch; ++b) {
      const T* src = x.plane_ptr(c, b);
      T* dst = y.plane_ptr(c, b);
      for (int yy = 0; yy < y.height; ++yy) {
        const T* srow = src + static_cast<std::size_t>(yy / 2) * x.width;
        T* drow = dst + static_cast<std::size_t>(yy) * y.width;
        for (int xx = 0; xx < y.width; ++xx) drow[xx] = srow[xx / 2];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.channels, dy.batch, dy.height / 2, dy.width / 2);
  for (int c = 0; c < dy.channels; ++c) {
    for (int b = 0; b < dy.batch; ++b) {
      const T* src = dy.plane_ptr(c, b);
      T* dst = dx.plane_ptr(c, b);
      for (int yy = 0; yy < dy.height; ++yy) {
        const T* srow = src + static_cast<std::size_t>(yy) * dy.width;
        T* drow = dst + static_cast<std::size_t>(yy / 2) * dx.width;
        for (int xx = 0; xx < dy.width; ++xx) drow[xx / 2] += srow[xx];
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.batch != b.batch || a.height != b.height || a.width != b.width) {
    throw std::logic_error("concat_channels: shape mismatch");
  }
  Tensor<T> y(a.channels + b.channels, a.batch, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), y.data.begin());
  std::copy(b.data.begin(), b.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return y;
}

/// Channels [first, first + count) of x.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int first, int count) {
  Tensor<T> y(count, x.batch, x.height, x.width);
  const auto begin = x.data.begin() + static_cast<std::ptrdiff_t>(first * x.row_size());
  std::copy(begin, begin + static_cast<std::ptrdiff_t>(y.data.size()), y.data.begin());
  return y;
}

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& x) {
  if (!acc.same_shape(x)) throw std::logic_error("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += x.data[i];
}

/// (C, N, H, W) -> (C*H*W, N, 1, 1), feature index c*H*W + y*W + x.
template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  const std::size_t plane = x.plane();
  Tensor<T> y(static_cast<int>(x.channels * plane), x.batch, 1, 1);
  for (int c = 0; c < x.channels; ++c) {
    for (int b = 0; b < x.batch; ++b) {
      const T* src = x.plane_ptr(c, b);
      for (std::size_t i = 0; i < plane; ++i) y.data[(c * plane + i) * x.batch + b] = src[i];
    }
  }
  return y;
}

template <typename T>
Tensor<T> unflatten(const Tensor<T>& x, int channels, int height, int width) {
  Tensor<T> y(channels, x.batch, height, width);
  const std::size_t plane = y.plane();
  for (int c = 0; c < channels; ++c) {
    for (int b = 0; b < x.batch; ++b) {
      T* dst = y.plane_ptr(c, b);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = x.data[(c * plane + i) * x.batch + b];
    }
  }
  return y;
}

}  // namespace coreg::nn
