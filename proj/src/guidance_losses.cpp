#include "verbdiff/guidance_losses.hpp"

#include <algorithm>
#include <cmath>

namespace verbdiff {

FeatureVector FeatureVector::unit(Vector v) {
  const double n = v.norm();
  if (!(n > 0.0)) throw std::domain_error("cannot normalize a zero feature vector");
  return {v / n, true};
}

namespace {

void check_pair(const Vector& a, const Vector& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("feature dimensions differ: " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
}

}  // namespace

double cosine_sim(const Vector& a, const Vector& b) {
  check_pair(a, b);
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw std::domain_error("cosine similarity of a zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

CosineGrad cosine_sim_with_grad(const Vector& a, const Vector& b) {
  check_pair(a, b);
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw std::domain_error("cosine similarity of a zero vector");
  CosineGrad g;
  g.value = a.dot(b) / (na * nb);
  g.d_a = b / (na * nb) - g.value * a / (na * na);
  g.d_b = a / (na * nb) - g.value * b / (nb * nb);
  return g;
}

std::string to_string(TripletSign sign) {
  return sign == TripletSign::as_prose ? "as_prose" : "as_written";
}

TripletSign parse_triplet_sign(const std::string& text) {
  if (text == "as_prose") return TripletSign::as_prose;
  if (text == "as_written") return TripletSign::as_written;
  throw ConfigError("unknown triplet sign '" + text + "' (as_prose | as_written)");
}

double triplet_loss(const Vector& f_gen, const Vector& e_gt, const Vector& e_anc, double margin,
                    TripletSign sign) {
  const double pos = cosine_sim(f_gen, e_gt);
  const double neg = cosine_sim(f_gen, e_anc);
  const double inner = sign == TripletSign::as_prose ? margin - pos + neg : margin + pos - neg;
  return std::max(0.0, inner);
}

TripletGrad triplet_loss_with_grad(const Vector& f_gen, const Vector& e_gt, const Vector& e_anc,
                                   double margin, TripletSign sign) {
  const CosineGrad pos = cosine_sim_with_grad(f_gen, e_gt);
  const CosineGrad neg = cosine_sim_with_grad(f_gen, e_anc);
  const double s = sign == TripletSign::as_prose ? 1.0 : -1.0;
  const double inner = margin - s * pos.value + s * neg.value;

  TripletGrad g;
  g.d_gen = Vector::Zero(f_gen.size());
  g.d_gt = Vector::Zero(e_gt.size());
  g.d_anc = Vector::Zero(e_anc.size());
  if (inner <= 0.0) return g;
  g.value = inner;
  g.active = true;
  g.d_gen = -s * pos.d_a + s * neg.d_a;
  g.d_gt = -s * pos.d_b;
  g.d_anc = s * neg.d_b;
  return g;
}

double align_loss(const Vector& f_gt_masked, const Vector& f_gen) {
  return 1.0 - cosine_sim(f_gt_masked, f_gen);
}

AlignGrad align_loss_with_grad(const Vector& f_gt_masked, const Vector& f_gen) {
  const CosineGrad c = cosine_sim_with_grad(f_gt_masked, f_gen);
  return {1.0 - c.value, -c.d_a, -c.d_b};
}

IdgGrad idg_with_grad(const Vector& f_gt_masked, const Vector& f_gen, const Vector& f_rel_gt,
                      const Vector& f_rel_gen) {
  check_pair(f_gt_masked, f_gen);
  check_pair(f_rel_gt, f_rel_gen);
  check_pair(f_gt_masked, f_rel_gt);
  const Vector global = f_gt_masked - f_gen;
  const Vector bias = f_rel_gt - f_rel_gen;

  IdgGrad g;
  const auto n = f_gen.size();
  g.d_gt_masked = Vector::Zero(n);
  g.d_gen = Vector::Zero(n);
  g.d_rel_gt = Vector::Zero(n);
  g.d_rel_gen = Vector::Zero(n);
  if (global.norm() < kDegenerateDirection || bias.norm() < kDegenerateDirection) {
    g.degenerate = true;
    return g;
  }
  const CosineGrad c = cosine_sim_with_grad(global, bias);
  g.value = std::clamp(1.0 - c.value, 0.0, 2.0);
  g.d_gt_masked = -c.d_a;
  g.d_gen = c.d_a;
  g.d_rel_gt = -c.d_b;
  g.d_rel_gen = c.d_b;
  return g;
}

namespace {

void check_reconstruction(const Image& noise, const Image& predicted, const Grid& mask) {
  if (!noise.same_shape(predicted))
    throw std::invalid_argument("noise and predicted noise shapes differ");
  if (mask.height() != noise.height() || mask.width() != noise.width())
    throw std::invalid_argument("mask resolution does not match the latent");
}

}  // namespace

double masked_reconstruction(const Image& noise, const Image& predicted, const Grid& mask) {
  return masked_reconstruction_with_grad(noise, predicted, mask).value;
}

ReconstructionGrad masked_reconstruction_with_grad(const Image& noise, const Image& predicted,
                                                   const Grid& mask) {
  check_reconstruction(noise, predicted, mask);
  ReconstructionGrad g;
  g.d_noise = Image(noise.channels(), noise.height(), noise.width());
  g.d_predicted = g.d_noise;
  const double count = static_cast<double>(noise.size());
  double sum = 0.0;
  for (int r = 0; r < noise.height(); ++r) {
    for (int c = 0; c < noise.width(); ++c) {
      const double m = mask(r, c);
      for (int ch = 0; ch < noise.channels(); ++ch) {
        const double diff = (noise.at(ch, r, c) - predicted.at(ch, r, c)) * m;
        sum += diff * diff;
        g.d_noise.at(ch, r, c) = 2.0 * diff * m / count;
        g.d_predicted.at(ch, r, c) = -2.0 * diff * m / count;
      }
    }
  }
  g.value = sum / count;
  return g;
}

double weighted_total(double rec, double rdg_value, double idg_value, const LossWeights& w) {
  return w.reconstruction * rec + w.disentangle * rdg_value + w.direction * idg_value;
}

bool LossBreakdown::consistent(const LossWeights& w, double tol) const {
  return std::abs(total - weighted_total(rec, rdg, idg, w)) <= tol &&
         std::abs(rdg - alpha_used * (triple + align)) <= tol;
}

LossBreakdown total_loss(double rec, double triple, double align, double alpha, double idg_value,
                         const LossWeights& w) {
  if (w.reconstruction < 0.0 || w.disentangle < 0.0 || w.direction < 0.0)
    throw std::invalid_argument("loss weights must be non-negative");
  LossBreakdown b;
  b.rec = rec;
  b.triple = triple;
  b.align = align;
  b.alpha_used = alpha;
  b.rdg = rdg(alpha, triple, align);
  b.idg = idg_value;
  b.total = weighted_total(b.rec, b.rdg, b.idg, w);
  return b;
}

ObjectiveGrad objective_with_grad(const ObjectiveInputs& in, const LossWeights& w) {
  ObjectiveGrad g;
  const auto rec = masked_reconstruction_with_grad(in.noise, in.predicted_noise, in.mask);
  g.d_noise = rec.d_noise;
  g.d_predicted_noise = rec.d_predicted;
  for (double& v : g.d_noise.values()) v *= w.reconstruction;
  for (double& v : g.d_predicted_noise.values()) v *= w.reconstruction;

  const auto n = in.f_gen.size();
  g.d_f_gen = Vector::Zero(n);
  g.d_e_gt = Vector::Zero(in.e_gt.size());
  g.d_e_anc = Vector::Zero(in.e_anc.size());
  g.d_f_gt_masked = Vector::Zero(in.f_gt_masked.size());
  g.d_f_rel_gt = Vector::Zero(in.f_rel_gt.size());
  g.d_f_rel_gen = Vector::Zero(in.f_rel_gen.size());

  if (!in.guidance) {
    g.breakdown = total_loss(rec.value, 0.0, 0.0, in.alpha, 0.0, w);
    return g;
  }

  const auto tri = triplet_loss_with_grad(in.f_gen, in.e_gt, in.e_anc, in.margin, in.sign);
  const auto ali = align_loss_with_grad(in.f_gt_masked, in.f_gen);
  const auto dir = idg_with_grad(in.f_gt_masked, in.f_gen, in.f_rel_gt, in.f_rel_gen);
  g.breakdown = total_loss(rec.value, tri.value, ali.value, in.alpha, dir.value, w);
  g.idg_degenerate = dir.degenerate;

  const double k_rdg = w.disentangle * in.alpha;
  const double k_idg = w.direction;
  g.d_f_gen = k_rdg * (tri.d_gen + ali.d_gen) + k_idg * dir.d_gen;
  g.d_e_gt = k_rdg * tri.d_gt;
  g.d_e_anc = k_rdg * tri.d_anc;
  g.d_f_gt_masked = k_rdg * ali.d_gt_masked + k_idg * dir.d_gt_masked;
  g.d_f_rel_gt = k_idg * dir.d_rel_gt;
  g.d_f_rel_gen = k_idg * dir.d_rel_gen;
  return g;
}

}  // namespace verbdiff
