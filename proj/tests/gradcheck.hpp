#pragma once

// Central finite-difference oracle for the loss gradients. Instances are
// probe-filtered so the step h never crosses a ReLU kink, a max-pool switch
// or a top-k selection boundary; at such points the analytic subgradient and
// the difference quotient legitimately disagree.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "uvsn/rng.hpp"
#include "uvsn/trainer.hpp"

namespace uvsn_gradcheck {

using namespace uvsn;

struct Instance {
  NetworkConfig cfg;
  SelectorParams<double> sel;
  DiscriminatorParams<double> disc;
  FrameFeatureSequence<double> video;
  SummaryFeatureSequence<double> real_summary;
  KeyframeAnnotation ann;
};

inline NetworkConfig small_config() {
  NetworkConfig cfg;
  cfg.feature_dim = 6;
  cfg.encoder_channels = {4, 6};
  cfg.encoder_depth = 2;
  cfg.kernel_size = 3;
  cfg.k_ratio = 0.35;
  cfg.disc_channels = {5};
  cfg.disc_depth = 1;
  return cfg;
}

inline Instance make_instance(std::uint64_t seed, int t) {
  Instance inst;
  inst.cfg = small_config();
  auto [sel, disc] = init_params<double>(inst.cfg, seed);
  inst.sel = std::move(sel);
  inst.disc = std::move(disc);
  Rng rng(seed ^ 0xA5A5A5A5ull);
  inst.video.video_id = "grad";
  inst.video.features.resize(t, inst.cfg.feature_dim);
  for (int i = 0; i < t; ++i) {
    for (int d = 0; d < inst.cfg.feature_dim; ++d) inst.video.features(i, d) = rng.uniform(-1.0, 1.0);
  }
  const int k_real = 4;
  inst.real_summary.video_id = "real";
  inst.real_summary.features.resize(k_real, inst.cfg.feature_dim);
  for (int i = 0; i < k_real; ++i) {
    inst.real_summary.selected_indices.push_back(i);
    for (int d = 0; d < inst.cfg.feature_dim; ++d) inst.real_summary.features(i, d) = rng.uniform(-1.0, 1.0);
  }
  inst.ann.video_id = "grad";
  inst.ann.mask.assign(t, 0);
  for (int i = 0; i < t; ++i) inst.ann.mask[i] = rng.uniform() < 0.3 ? 1 : 0;
  inst.ann.mask[rng.uniform_int(0, t - 1)] = 1;
  return inst;
}

// Smallest distance to a non-smooth switch over the whole computation.
struct Margins {
  double relu = 1e9;
  double pool = 1e9;
  double topk = 1e9;
  double row_norm = 1e9;
};

inline void block_margins(const std::vector<BlockCache<double>>& blocks, Margins& m) {
  for (const auto& b : blocks) {
    m.relu = std::min(m.relu, b.conv_out.cwiseAbs().minCoeff());
    const MatX<double> act = relu(b.conv_out);
    for (Eigen::Index t = 0; t + 1 < act.cols(); t += 2) {
      for (Eigen::Index r = 0; r < act.rows(); ++r) {
        // A pair of dead ReLUs ties at exactly zero and stays constant under
        // any perturbation the ReLU probe admits; only live pairs can flip.
        if (act(r, t) > 0.0 || act(r, t + 1) > 0.0) {
          m.pool = std::min(m.pool, std::abs(act(r, t) - act(r, t + 1)));
        }
      }
    }
  }
}

inline Margins measure_margins(const Instance& inst) {
  Margins m;
  const int t = static_cast<int>(inst.video.frames());
  const int k = std::min(inst.cfg.selection_count(t), t);
  const auto tr = selector_forward_traced(inst.sel, inst.cfg, inst.video.features, k);
  block_margins(tr.blocks, m);
  m.relu = std::min(m.relu, tr.skip_sum.cwiseAbs().minCoeff());
  std::vector<double> p(tr.key_prob.data(), tr.key_prob.data() + tr.key_prob.size());
  std::sort(p.begin(), p.end(), std::greater<>());
  m.topk = std::min(m.topk, p[k - 1] - p[k]);
  for (int i = 0; i < k; ++i) m.row_norm = std::min(m.row_norm, tr.merged.col(i).norm());

  const MatX<double> merged_rows = tr.merged.transpose();
  const auto fake_tr = discriminator_forward_traced(inst.disc, inst.cfg, merged_rows);
  block_margins(fake_tr.blocks, m);
  const auto real_tr = discriminator_forward_traced(inst.disc, inst.cfg, inst.real_summary.features);
  block_margins(real_tr.blocks, m);
  return m;
}

inline bool stable_instance(const Instance& inst) {
  const Margins m = measure_margins(inst);
  return m.relu > 5e-3 && m.pool > 5e-3 && m.topk > 3e-3 && m.row_norm > 5e-2;
}

struct CheckSpec {
  TermFlags flags;
  bool with_real = false;
  bool is_paired = false;
  LossWeights weights;
};

// Total under the spec'd term set; gradients optional.
inline SelectorObjective<double> evaluate(const Instance& inst, const CheckSpec& spec, bool want_grads) {
  return evaluate_selector_objective<double>(inst.sel, spec.flags.adv ? &inst.disc : nullptr, inst.cfg,
                                             spec.weights, spec.flags, inst.video,
                                             spec.with_real ? &inst.real_summary : nullptr,
                                             spec.is_paired ? &inst.ann : nullptr, spec.is_paired, want_grads);
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  long coords = 0;
  std::string worst;
};

inline double rel_err(double analytic, double fd) {
  const double diff = std::abs(analytic - fd);
  if (diff < 1e-8) return 0.0;  // below the FD noise floor
  return diff / std::max({std::abs(analytic), std::abs(fd), 1e-12});
}

// Checks every coordinate of every parameter array of the networks named in
// `check_sel` / `check_disc` against central differences with step h.
inline GradCheckResult check_gradients(Instance inst, const CheckSpec& spec, bool check_sel, bool check_disc,
                                       double h = 1e-3) {
  GradCheckResult result;
  auto base = evaluate(inst, spec, true);

  const auto run = [&](std::vector<ArrayView<double>> params, std::vector<ArrayView<double>> grads) {
    for (std::size_t a = 0; a < params.size(); ++a) {
      for (Eigen::Index i = 0; i < params[a].size; ++i) {
        const double saved = params[a].data[i];
        params[a].data[i] = saved + h;
        const double up = evaluate(inst, spec, false).total;
        params[a].data[i] = saved - h;
        const double down = evaluate(inst, spec, false).total;
        params[a].data[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double err = rel_err(grads[a].data[i], fd);
        ++result.coords;
        if (err > result.max_rel_err) {
          result.max_rel_err = err;
          result.worst = params[a].name + "[" + std::to_string(i) + "] analytic=" +
                         std::to_string(grads[a].data[i]) + " fd=" + std::to_string(fd);
        }
      }
    }
  };

  if (check_sel) run(collect_arrays(inst.sel), collect_arrays(base.sel_grads));
  if (check_disc) {
    if (!spec.flags.adv) throw ValidationError("gradcheck: discriminator check requires the adversarial term");
    run(collect_arrays(inst.disc), collect_arrays(base.disc_grads));
  }
  return result;
}

// Draws probe-stable instances from a deterministic seed sequence.
inline std::vector<Instance> stable_instances(int count, std::uint64_t seed0, int t_min = 9, int t_max = 16) {
  std::vector<Instance> out;
  std::uint64_t seed = seed0;
  Rng tgen(seed0 ^ 0x5151ull);
  int guard = 0;
  while (static_cast<int>(out.size()) < count) {
    if (++guard > 4000) throw Error("gradcheck: could not find enough probe-stable instances");
    const int t = tgen.uniform_int(t_min, t_max);
    Instance inst = make_instance(seed++, t);
    if (stable_instance(inst)) out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace uvsn_gradcheck
