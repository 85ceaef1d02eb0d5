#pragma once

#include "coreg/fields.hpp"
#include "coreg/image.hpp"

namespace coreg {

enum class MatchingLoss { l2, ncc };

std::string to_string(MatchingLoss loss);
MatchingLoss parse_matching_loss(const std::string& name);

inline constexpr double kNccEpsilon = 1e-5;

struct ObjectiveWeights {
  double alpha = 0.0;  // smoothness
  double beta = 0.0;   // autoencoder reconstruction
  MatchingLoss matching = MatchingLoss::l2;
  int ncc_window = 9;

  void validate() const;
};

/// Terms of Q = matching + alpha * smoothness + beta * cae_recon.
struct ObjectiveValue {
  double total = 0.0;
  double matching = 0.0;
  double smoothness = 0.0;
  double cae_recon = 0.0;
};

/// Mean squared difference.
double l2_image_loss(const Image& a, const Image& b);
/// d l2_image_loss / d a.
Image l2_image_loss_grad(const Image& a, const Image& b);

/// 1 - mean over pixels of the squared local correlation coefficient, using
/// odd `window`×`window` windows clipped at the image border:
/// cc = cov² / ((var_a + eps) (var_b + eps)) with window means.
double ncc_loss(const Image& a, const Image& b, int window);
/// d ncc_loss / d a.
Image ncc_loss_grad(const Image& a, const Image& b, int window);

/// Mean over pixels of the squared Frobenius norm of the forward-difference Jacobian.
double smoothness_penalty(const DisplacementField& field);
DisplacementField smoothness_penalty_grad(const DisplacementField& field);

/// Mean over pixels and components of (field - reconstruction)².
double field_recon_loss(const DisplacementField& field, const DisplacementField& reconstruction);

ObjectiveValue total_objective(const Image& target, const Image& registered, const DisplacementField& field,
                               const DisplacementField& reconstruction, const ObjectiveWeights& weights);

struct ObjectiveGradients {
  Image d_registered;
  DisplacementField d_field;
  DisplacementField d_reconstruction;
};

/// total_objective and its gradient w.r.t. the registered image, the field
/// (direct terms only) and the reconstruction. Terms with zero weight are
/// still evaluated so the returned values are always complete.
ObjectiveValue total_objective_with_grad(const Image& target, const Image& registered,
                                         const DisplacementField& field, const DisplacementField& reconstruction,
                                         const ObjectiveWeights& weights, ObjectiveGradients& grads);

}  // namespace coreg
