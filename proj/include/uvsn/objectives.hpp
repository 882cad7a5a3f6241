#pragma once

#include <Eigen/Core>
#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "uvsn/errors.hpp"
#include "uvsn/network.hpp"
#include "uvsn/types.hpp"

namespace uvsn {

enum class GanObjective { minimax, non_saturating };

inline const char* to_string(GanObjective g) { return g == GanObjective::minimax ? "minimax" : "non_saturating"; }

inline GanObjective parse_gan_objective(const std::string& s) {
  if (s == "minimax") return GanObjective::minimax;
  if (s == "non_saturating") return GanObjective::non_saturating;
  throw ConfigError("unknown gan objective '" + s + "'");
}

struct LossWeights {
  double beta = 1.0;    // diversity weight
  double gamma = 0.001;  // partial-supervision weight
  GanObjective gan_objective = GanObjective::minimax;

  void validate() const {
    if (beta < 0 || gamma < 0) throw ValidationError("loss weights beta and gamma must be nonnegative");
  }
};

// Row-norm floor for cosine similarities; a zero row then contributes ~0.
inline constexpr double kCosineNormEpsilon = 1e-8;

namespace detail {

inline void check_unit_interval(const std::vector<double>& xs, const char* what) {
  if (xs.empty()) throw ValidationError(std::string(what) + ": empty score list");
  for (double x : xs) {
    if (!(x > 0.0 && x < 1.0)) {
      throw ValidationError(std::string(what) + ": scores must lie strictly in (0, 1), got " + std::to_string(x));
    }
  }
}

}  // namespace detail

// Numerically safe log(1 + exp(x)).
template <class Scalar>
Scalar softplus(Scalar x) {
  return x > Scalar(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// ---------------------------------------------------------------------------
// Adversarial objective
// ---------------------------------------------------------------------------

// E[log D(s)] + E[log(1 - D(S_K(v)))] over the given batches. The
// discriminator ascends this; the selector descends it.
inline double adversarial_loss(const std::vector<double>& d_real, const std::vector<double>& d_fake) {
  detail::check_unit_interval(d_real, "adversarial_loss d_real");
  detail::check_unit_interval(d_fake, "adversarial_loss d_fake");
  double real = 0.0, fake = 0.0;
  for (double x : d_real) real += std::log(x);
  for (double x : d_fake) fake += std::log1p(-x);
  return real / d_real.size() + fake / d_fake.size();
}

// The selector-side adversarial term. minimax: mean log(1 - x), minimized.
// non_saturating: mean -log(x), minimized; same sign of gradient in x but
// strong where the discriminator wins.
inline double selector_adversarial_term(const std::vector<double>& d_fake, GanObjective objective) {
  detail::check_unit_interval(d_fake, "selector_adversarial_term");
  double acc = 0.0;
  for (double x : d_fake) acc += objective == GanObjective::minimax ? std::log1p(-x) : -std::log(x);
  return acc / d_fake.size();
}

// Logit-space versions used on the training path; exactly the same values
// as the probability forms but finite for any finite logit.
//   log D = -softplus(-z),  log(1 - D) = -softplus(z)
template <class Scalar>
Scalar adversarial_loss_from_logits(Scalar z_real, Scalar z_fake) {
  return -softplus(-z_real) - softplus(z_fake);
}

// d/dz of the two adversarial pieces.
template <class Scalar>
Scalar d_log_sigmoid(Scalar z) {  // d/dz log sigma(z)
  return sigmoid(-z);
}

template <class Scalar>
Scalar d_log_one_minus_sigmoid(Scalar z) {  // d/dz log(1 - sigma(z))
  return -sigmoid(z);
}

template <class Scalar>
Scalar selector_adversarial_term_from_logit(Scalar z_fake, GanObjective objective) {
  return objective == GanObjective::minimax ? -softplus(z_fake) : softplus(-z_fake);
}

template <class Scalar>
Scalar selector_adversarial_grad_logit(Scalar z_fake, GanObjective objective) {
  return objective == GanObjective::minimax ? d_log_one_minus_sigmoid(z_fake) : -d_log_sigmoid(z_fake);
}

// ---------------------------------------------------------------------------
// Reconstruction
// ---------------------------------------------------------------------------

template <class Scalar>
struct ValueGrad {
  Scalar value = Scalar(0);
  MatX<Scalar> grad;
};

// (1/k) sum_t || s_t - v_{f_t} ||^2 over the selected frames; the gradient
// is with respect to the summary feature rows.
template <class Scalar>
ValueGrad<Scalar> reconstruction_loss_with_grad(const MatX<Scalar>& summary_rows,
                                                const std::vector<int>& selected_indices,
                                                const MatX<Scalar>& video_rows) {
  const Eigen::Index k = summary_rows.rows();
  if (static_cast<Eigen::Index>(selected_indices.size()) != k) {
    throw ValidationError("reconstruction_loss: index count != summary rows");
  }
  ValueGrad<Scalar> out;
  out.grad = MatX<Scalar>::Zero(k, summary_rows.cols());
  for (Eigen::Index i = 0; i < k; ++i) {
    const int f = selected_indices[i];
    if (f < 0 || f >= video_rows.rows()) {
      throw ValidationError("reconstruction_loss: frame index " + std::to_string(f) + " out of range");
    }
    const auto diff = (summary_rows.row(i) - video_rows.row(f)).eval();
    out.value += diff.squaredNorm();
    out.grad.row(i) = Scalar(2) * diff;
  }
  out.value /= static_cast<Scalar>(k);
  out.grad /= static_cast<Scalar>(k);
  return out;
}

template <class Scalar>
Scalar reconstruction_loss(const SummaryFeatureSequence<Scalar>& summary, const FrameFeatureSequence<Scalar>& v) {
  summary.validate_against(v.frames());
  if (summary.dim() != v.dim()) throw ValidationError("reconstruction_loss: feature dimension mismatch");
  return reconstruction_loss_with_grad<Scalar>(summary.features, summary.selected_indices, v.features).value;
}

// ---------------------------------------------------------------------------
// Diversity (repelling regularizer)
// ---------------------------------------------------------------------------

// Mean pairwise cosine similarity over ordered pairs of selected-frame
// features: (1/(k(k-1))) sum_{t != t'} cos(s_t, s_t'). Minimizing it pushes
// the selected frames apart. k < 2 has no pairs and scores 0.
template <class Scalar>
ValueGrad<Scalar> diversity_loss_with_grad(const MatX<Scalar>& rows) {
  const Eigen::Index k = rows.rows();
  ValueGrad<Scalar> out;
  out.grad = MatX<Scalar>::Zero(k, rows.cols());
  if (k < 2) {
    std::cerr << "uvsn: warning: diversity loss needs k >= 2 selected frames, got k=" << k << "; using 0\n";
    return out;
  }
  const Scalar eps = static_cast<Scalar>(kCosineNormEpsilon);
  VecX<Scalar> norms(k), safe(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    norms(i) = rows.row(i).norm();
    safe(i) = norms(i) + eps;
  }
  const Scalar pairs = static_cast<Scalar>(k) * static_cast<Scalar>(k - 1);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = a + 1; b < k; ++b) {
      const Scalar dot = rows.row(a).dot(rows.row(b));
      const Scalar denom = safe(a) * safe(b);
      out.value += Scalar(2) * dot / denom;
      // d/da of both ordered pairs (a,b) and (b,a).
      using RowT = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
      const auto unit = [&](Eigen::Index i) -> RowT {
        if (norms(i) > Scalar(0)) return rows.row(i) / norms(i);
        return RowT::Zero(rows.cols());
      };
      out.grad.row(a) += Scalar(2) * (rows.row(b) / denom - dot / (safe(a) * denom) * unit(a));
      out.grad.row(b) += Scalar(2) * (rows.row(a) / denom - dot / (safe(b) * denom) * unit(b));
    }
  }
  out.value /= pairs;
  out.grad /= pairs;
  return out;
}

template <class Scalar>
Scalar diversity_loss(const SummaryFeatureSequence<Scalar>& summary) {
  return diversity_loss_with_grad<Scalar>(summary.features).value;
}

// ---------------------------------------------------------------------------
// Partial supervision
// ---------------------------------------------------------------------------

// Per-frame two-class cross entropy against the ground-truth key-frame
// indicator: -(1/T) sum_t log softmax(delta_t)[l_t].
template <class Scalar>
ValueGrad<Scalar> supervised_loss_with_grad(const FrameScores<Scalar>& scores, const Mask& mask) {
  const Eigen::Index t = scores.rows();
  if (scores.cols() != 2) throw ValidationError("supervised_loss: scores must be T x 2");
  if (static_cast<Eigen::Index>(mask.size()) != t) {
    throw ValidationError("supervised_loss: mask length " + std::to_string(mask.size()) +
                          " != T=" + std::to_string(t));
  }
  ValueGrad<Scalar> out;
  out.grad = MatX<Scalar>::Zero(t, 2);
  for (Eigen::Index i = 0; i < t; ++i) {
    const int target = mask[i] ? kKeyClass : kNonKeyClass;
    const Scalar a = scores(i, 0), b = scores(i, 1);
    const Scalar m = std::max(a, b);
    const Scalar logsum = m + std::log(std::exp(a - m) + std::exp(b - m));
    out.value -= scores(i, target) - logsum;
    const Scalar p0 = std::exp(a - logsum);
    const Scalar p1 = std::exp(b - logsum);
    out.grad(i, 0) = p0 - (target == 0 ? Scalar(1) : Scalar(0));
    out.grad(i, 1) = p1 - (target == 1 ? Scalar(1) : Scalar(0));
  }
  out.value /= static_cast<Scalar>(t);
  out.grad /= static_cast<Scalar>(t);
  return out;
}

template <class Scalar>
Scalar supervised_loss(const FrameScores<Scalar>& scores, const KeyframeAnnotation& ann) {
  ann.validate();
  return supervised_loss_with_grad<Scalar>(scores, ann.mask).value;
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

// adv + reconst + beta * div + gamma * 1(v in V_p) * psup. With no paired
// term this is exactly the unpaired objective.
template <class Scalar>
Scalar total_selector_loss(Scalar adv_term, Scalar reconst, Scalar div, std::optional<Scalar> psup,
                           const LossWeights& weights, bool is_paired) {
  weights.validate();
  Scalar total = adv_term + reconst + static_cast<Scalar>(weights.beta) * div;
  if (is_paired) {
    if (!psup.has_value()) throw ValidationError("total_selector_loss: paired video without a supervision term");
    total += static_cast<Scalar>(weights.gamma) * *psup;
  }
  return total;
}

}  // namespace uvsn
