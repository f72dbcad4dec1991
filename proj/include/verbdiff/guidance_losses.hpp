#pragma once

#include <string>

#include "verbdiff/common.hpp"

namespace verbdiff {

/// Feature produced by an encoder port.
struct FeatureVector {
  Vector values;
  bool normalized = false;

  static FeatureVector unit(Vector v);
};

/// dot(a, b) / (|a| |b|). Throws std::domain_error for a zero vector and
/// std::invalid_argument for mismatched dimensions.
double cosine_sim(const Vector& a, const Vector& b);

struct CosineGrad {
  double value = 0.0;
  Vector d_a;
  Vector d_b;
};
CosineGrad cosine_sim_with_grad(const Vector& a, const Vector& b);

/// `as_prose` pulls f_gen toward the ground-truth text and away from the anchor text:
/// max(0, m - sim(f, e_gt) + sim(f, e_anc)). `as_written` flips both signs.
enum class TripletSign { as_prose, as_written };
std::string to_string(TripletSign sign);
TripletSign parse_triplet_sign(const std::string& text);

double triplet_loss(const Vector& f_gen, const Vector& e_gt, const Vector& e_anc, double margin,
                    TripletSign sign = TripletSign::as_prose);

struct TripletGrad {
  double value = 0.0;
  bool active = false;  // hinge is open
  Vector d_gen;
  Vector d_gt;
  Vector d_anc;
};
TripletGrad triplet_loss_with_grad(const Vector& f_gen, const Vector& e_gt, const Vector& e_anc,
                                   double margin, TripletSign sign = TripletSign::as_prose);

/// 1 - cos(f_gt_masked, f_gen).
double align_loss(const Vector& f_gt_masked, const Vector& f_gen);

struct AlignGrad {
  double value = 0.0;
  Vector d_gt_masked;
  Vector d_gen;
};
AlignGrad align_loss_with_grad(const Vector& f_gt_masked, const Vector& f_gen);

inline double rdg(double alpha, double triple, double align) { return alpha * (triple + align); }

/// Norm below which an IDG direction counts as degenerate.
inline constexpr double kDegenerateDirection = 1e-8;

struct IdgGrad {
  double value = 0.0;
  bool degenerate = false;  // loss inactive, all gradients zero
  Vector d_gt_masked;
  Vector d_gen;
  Vector d_rel_gt;
  Vector d_rel_gen;
};

/// 1 - cos(f_gt_masked - f_gen, f_rel_gt - f_rel_gen). Returns 0 with `degenerate`
/// set when either difference is (numerically) zero.
IdgGrad idg_with_grad(const Vector& f_gt_masked, const Vector& f_gen, const Vector& f_rel_gt,
                      const Vector& f_rel_gen);
inline double idg(const Vector& f_gt_masked, const Vector& f_gen, const Vector& f_rel_gt,
                  const Vector& f_rel_gen) {
  return idg_with_grad(f_gt_masked, f_gen, f_rel_gt, f_rel_gen).value;
}

/// Mean over all C*H*W elements of ((noise - predicted) * mask)^2; the divisor is
/// the full element count. `mask` is H x W and broadcast over channels.
double masked_reconstruction(const Image& noise, const Image& predicted, const Grid& mask);

struct ReconstructionGrad {
  double value = 0.0;
  Image d_noise;
  Image d_predicted;
};
ReconstructionGrad masked_reconstruction_with_grad(const Image& noise, const Image& predicted,
                                                   const Grid& mask);

struct LossWeights {
  double reconstruction = 1.0;  // lambda_1
  double disentangle = 10.0;    // lambda_2 (RDG)
  double direction = 0.8;       // lambda_3 (IDG)
};

double weighted_total(double rec, double rdg_value, double idg_value, const LossWeights& w);

struct LossBreakdown {
  double rec = 0.0;
  double triple = 0.0;
  double align = 0.0;
  double rdg = 0.0;
  double idg = 0.0;
  double total = 0.0;
  double alpha_used = 1.0;

  /// total and rdg identities within `tol`.
  bool consistent(const LossWeights& w, double tol = 1e-9) const;
};

LossBreakdown total_loss(double rec, double triple, double align, double alpha, double idg_value,
                         const LossWeights& w);

/// Everything one training item feeds into the objective.
struct ObjectiveInputs {
  Image noise;
  Image predicted_noise;
  Grid mask;
  Vector f_gen;
  Vector e_gt;
  Vector e_anc;
  Vector f_gt_masked;
  Vector f_rel_gt;
  Vector f_rel_gen;
  double alpha = 1.0;
  double margin = 0.2;
  TripletSign sign = TripletSign::as_prose;
  bool guidance = true;  // false: reconstruction only
};

struct ObjectiveGrad {
  LossBreakdown breakdown;
  bool idg_degenerate = false;
  Image d_noise;
  Image d_predicted_noise;
  Vector d_f_gen;
  Vector d_e_gt;
  Vector d_e_anc;
  Vector d_f_gt_masked;
  Vector d_f_rel_gt;
  Vector d_f_rel_gen;
};

/// lambda_1 * rec + lambda_2 * alpha * (triple + align) + lambda_3 * idg, with
/// gradients for every input.
ObjectiveGrad objective_with_grad(const ObjectiveInputs& in, const LossWeights& w);

}  // namespace verbdiff
