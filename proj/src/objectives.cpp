#include "coreg/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace coreg {

std::string to_string(MatchingLoss loss) { return loss == MatchingLoss::l2 ? "l2" : "ncc"; }

MatchingLoss parse_matching_loss(const std::string& name) {
  if (name == "l2") return MatchingLoss::l2;
  if (name == "ncc") return MatchingLoss::ncc;
  throw std::invalid_argument("unknown matching loss: " + name);
}

void ObjectiveWeights::validate() const {
  if (!std::isfinite(alpha) || alpha < 0.0) throw std::invalid_argument("alpha must be finite and >= 0");
  if (!std::isfinite(beta) || beta < 0.0) throw std::invalid_argument("beta must be finite and >= 0");
  if (ncc_window < 3 || ncc_window % 2 == 0) throw std::invalid_argument("ncc_window must be odd and >= 3");
}

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": image shapes differ");
}

// Inclusive box sums over a (2r+1)^2 window clipped to the image.
class BoxSum {
 public:
  BoxSum(int h, int w, int radius) : h_(h), w_(w), r_(radius), sat_(static_cast<std::size_t>(h + 1) * (w + 1)) {}

  std::vector<double> apply(const std::vector<double>& v) {
    std::fill(sat_.begin(), sat_.end(), 0.0);
    for (int y = 0; y < h_; ++y) {
      double run = 0.0;
      for (int x = 0; x < w_; ++x) {
        run += v[static_cast<std::size_t>(y) * w_ + x];
        sat_[idx(y + 1, x + 1)] = sat_[idx(y, x + 1)] + run;
      }
    }
    std::vector<double> out(v.size());
    for (int y = 0; y < h_; ++y) {
      const int y0 = std::max(0, y - r_), y1 = std::min(h_, y + r_ + 1);
      for (int x = 0; x < w_; ++x) {
        const int x0 = std::max(0, x - r_), x1 = std::min(w_, x + r_ + 1);
        out[static_cast<std::size_t>(y) * w_ + x] = sat_[idx(y1, x1)] - sat_[idx(y0, x1)] - sat_[idx(y1, x0)] + sat_[idx(y0, x0)];
      }
    }
    return out;
  }

  double count(int y, int x) const {
    const int ny = std::min(h_, y + r_ + 1) - std::max(0, y - r_);
    const int nx = std::min(w_, x + r_ + 1) - std::max(0, x - r_);
    return static_cast<double>(ny) * nx;
  }

 private:
  std::size_t idx(int y, int x) const { return static_cast<std::size_t>(y) * (w_ + 1) + x; }
  int h_, w_, r_;
  std::vector<double> sat_;
};

struct NccStats {
  std::vector<double> cc, cov, denom, var_a_eps, mean_a, mean_b, count;
};

NccStats ncc_stats(const Image& a, const Image& b, int window) {
  if (window < 3 || window % 2 == 0) throw std::invalid_argument("ncc_loss: window must be odd and >= 3");
  require_same(a, b, "ncc_loss");
  const int h = a.height(), w = a.width();
  const std::size_t n = a.size();
  std::vector<double> va(a.values().begin(), a.values().end()), vb(b.values().begin(), b.values().end());
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = va[i] * va[i];
    bb[i] = vb[i] * vb[i];
    ab[i] = va[i] * vb[i];
  }
  BoxSum box(h, w, window / 2);
  const auto sa = box.apply(va), sb = box.apply(vb), saa = box.apply(aa), sbb = box.apply(bb), sab = box.apply(ab);
  NccStats s;
  for (auto* v : {&s.cc, &s.cov, &s.denom, &s.var_a_eps, &s.mean_a, &s.mean_b, &s.count}) v->resize(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double cnt = box.count(y, x);
      const double ma = sa[i] / cnt, mb = sb[i] / cnt;
      const double cov = sab[i] / cnt - ma * mb;
      const double var_a = saa[i] / cnt - ma * ma + kNccEpsilon;
      const double var_b = sbb[i] / cnt - mb * mb + kNccEpsilon;
      s.count[i] = cnt;
      s.mean_a[i] = ma;
      s.mean_b[i] = mb;
      s.cov[i] = cov;
      s.var_a_eps[i] = var_a;
      s.denom[i] = var_a * var_b;
      s.cc[i] = cov * cov / s.denom[i];
    }
  }
  return s;
}

}  // namespace

double l2_image_loss(const Image& a, const Image& b) {
  require_same(a, b, "l2_image_loss");
  auto va = a.values(), vb = b.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = va[i] - vb[i];
    sum += d * d;
  }
  return sum / static_cast<double>(va.size());
}

Image l2_image_loss_grad(const Image& a, const Image& b) {
  require_same(a, b, "l2_image_loss");
  Image g(a.height(), a.width());
  auto va = a.values(), vb = b.values();
  auto vg = g.values();
  const double scale = 2.0 / static_cast<double>(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) vg[i] = scale * (va[i] - vb[i]);
  return g;
}

double ncc_loss(const Image& a, const Image& b, int window) {
  const NccStats s = ncc_stats(a, b, window);
  double sum = 0.0;
  for (double v : s.cc) sum += v;
  return 1.0 - sum / static_cast<double>(s.cc.size());
}

Image ncc_loss_grad(const Image& a, const Image& b, int window) {
  const NccStats s = ncc_stats(a, b, window);
  const std::size_t n = s.cc.size();
  // d cc_p / d a_q = A_p b_q + B_p a_q + C_p for q in window(p).
  std::vector<double> A(n), B(n), C(n);
  for (std::size_t i = 0; i < n; ++i) {
    A[i] = 2.0 * s.cov[i] / (s.denom[i] * s.count[i]);
    B[i] = -2.0 * s.cc[i] / (s.var_a_eps[i] * s.count[i]);
    C[i] = -(A[i] * s.mean_b[i] + B[i] * s.mean_a[i]);
  }
  BoxSum box(a.height(), a.width(), window / 2);
  const auto sA = box.apply(A), sB = box.apply(B), sC = box.apply(C);
  Image g(a.height(), a.width());
  auto va = a.values(), vb = b.values();
  auto vg = g.values();
  const double scale = -1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) vg[i] = scale * (sA[i] * vb[i] + sB[i] * va[i] + sC[i]);
  return g;
}

double smoothness_penalty(const DisplacementField& field) {
  const FieldGradient g = spatial_gradient(field);
  double sum = 0.0;
  for (double v : g.values()) sum += v * v;
  return sum / (static_cast<double>(field.height()) * field.width());
}

DisplacementField smoothness_penalty_grad(const DisplacementField& field) {
  FieldGradient g = spatial_gradient(field);
  const double scale = 2.0 / (static_cast<double>(field.height()) * field.width());
  for (int r = 0; r < g.height(); ++r) {
    for (int c = 0; c < g.width(); ++c) {
      for (int k = 0; k < 2; ++k) {
        for (int ax = 0; ax < 2; ++ax) g.at(r, c, k, ax) *= scale;
      }
    }
  }
  return spatial_gradient_backward(g);
}

double field_recon_loss(const DisplacementField& field, const DisplacementField& reconstruction) {
  if (!field.same_shape(reconstruction)) throw std::invalid_argument("field_recon_loss: shapes differ");
  auto f = field.values(), r = reconstruction.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double d = f[i] - r[i];
    sum += d * d;
  }
  return sum / static_cast<double>(f.size());
}

namespace {

void check_objective_shapes(const Image& target, const Image& registered, const DisplacementField& field,
                            const DisplacementField& reconstruction) {
  if (!target.same_shape(registered) || !field.same_shape(target) || !reconstruction.same_shape(field)) {
    throw std::invalid_argument("total_objective: inconsistent shapes");
  }
}

double matching_value(const Image& target, const Image& registered, const ObjectiveWeights& w) {
  return w.matching == MatchingLoss::l2 ? l2_image_loss(registered, target)
                                        : ncc_loss(registered, target, w.ncc_window);
}

}  // namespace

ObjectiveValue total_objective(const Image& target, const Image& registered, const DisplacementField& field,
                               const DisplacementField& reconstruction, const ObjectiveWeights& weights) {
  weights.validate();
  check_objective_shapes(target, registered, field, reconstruction);
  ObjectiveValue v;
  v.matching = matching_value(target, registered, weights);
  v.smoothness = smoothness_penalty(field);
  v.cae_recon = field_recon_loss(field, reconstruction);
  v.total = v.matching + weights.alpha * v.smoothness + weights.beta * v.cae_recon;
  return v;
}

ObjectiveValue total_objective_with_grad(const Image& target, const Image& registered,
                                         const DisplacementField& field, const DisplacementField& reconstruction,
                                         const ObjectiveWeights& weights, ObjectiveGradients& grads) {
  ObjectiveValue v = total_objective(target, registered, field, reconstruction, weights);
  grads.d_registered = weights.matching == MatchingLoss::l2 ? l2_image_loss_grad(registered, target)
                                                            : ncc_loss_grad(registered, target, weights.ncc_window);
  grads.d_field = DisplacementField(field.height(), field.width());
  grads.d_reconstruction = DisplacementField(field.height(), field.width());
  auto df = grads.d_field.values();
  if (weights.alpha != 0.0) {
    const DisplacementField gs = smoothness_penalty_grad(field);
    auto vs = gs.values();
    for (std::size_t i = 0; i < df.size(); ++i) df[i] += weights.alpha * vs[i];
  }
  if (weights.beta != 0.0) {
    auto f = field.values(), r = reconstruction.values();
    auto dr = grads.d_reconstruction.values();
    const double scale = 2.0 * weights.beta / static_cast<double>(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double d = scale * (f[i] - r[i]);
      df[i] += d;
      dr[i] = -d;
    }
  }
  return v;
}

}  // namespace coreg
