#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "uvsn/checkpoint.hpp"
#include "uvsn/config.hpp"
#include "uvsn/errors.hpp"
#include "uvsn/network.hpp"
#include "uvsn/objectives.hpp"
#include "uvsn/rng.hpp"
#include "uvsn/types.hpp"

namespace uvsn {

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

enum class Preset { sumfcn_unsup, unpaired_adv, unpaired, unpaired_psup };

inline const char* to_string(Preset p) {
  switch (p) {
    case Preset::sumfcn_unsup: return "sumfcn_unsup";
    case Preset::unpaired_adv: return "unpaired_adv";
    case Preset::unpaired: return "unpaired";
    case Preset::unpaired_psup: return "unpaired_psup";
  }
  return "?";
}

inline Preset parse_preset(const std::string& s) {
  if (s == "sumfcn_unsup") return Preset::sumfcn_unsup;
  if (s == "unpaired_adv") return Preset::unpaired_adv;
  if (s == "unpaired") return Preset::unpaired;
  if (s == "unpaired_psup") return Preset::unpaired_psup;
  throw ConfigError("unknown preset '" + s + "'");
}

// Which loss terms are active. Every preset keeps the reconstruction term;
// the flag exists so single-term gradient checks can isolate a loss.
struct TermFlags {
  bool adv = true;
  bool div = true;
  bool psup = false;
  bool reconst = true;
};

inline TermFlags preset_terms(Preset p) {
  switch (p) {
    case Preset::sumfcn_unsup: return {false, true, false, true};
    case Preset::unpaired_adv: return {true, false, false, true};
    case Preset::unpaired: return {true, true, false, true};
    case Preset::unpaired_psup: return {true, true, true, true};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct SgdConfig {
  double lr = 2e-4;
  double momentum = 0.0;
};

template <class Scalar>
double global_grad_norm(const std::vector<ArrayView<Scalar>>& grads) {
  double acc = 0.0;
  for (const auto& g : grads) {
    for (Eigen::Index i = 0; i < g.size; ++i) acc += static_cast<double>(g.data[i]) * static_cast<double>(g.data[i]);
  }
  return std::sqrt(acc);
}

template <class Scalar>
bool clip_by_global_norm(const std::vector<ArrayView<Scalar>>& grads, double max_norm) {
  const double norm = global_grad_norm(grads);
  if (!(norm > max_norm)) return false;
  const Scalar scale = static_cast<Scalar>(max_norm / norm);
  for (const auto& g : grads) {
    for (Eigen::Index i = 0; i < g.size; ++i) g.data[i] *= scale;
  }
  return true;
}

// One Adam update; `t` is the 1-based step count used for bias correction.
template <class Scalar>
void adam_step(const std::vector<ArrayView<Scalar>>& params, const std::vector<ArrayView<Scalar>>& grads,
               const std::vector<ArrayView<Scalar>>& m, const std::vector<ArrayView<Scalar>>& v, long t,
               const AdamConfig& cfg) {
  const Scalar b1 = static_cast<Scalar>(cfg.beta1);
  const Scalar b2 = static_cast<Scalar>(cfg.beta2);
  const Scalar lr = static_cast<Scalar>(cfg.lr);
  const Scalar eps = static_cast<Scalar>(cfg.eps);
  const Scalar bc1 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta1, static_cast<double>(t)));
  const Scalar bc2 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta2, static_cast<double>(t)));
  for (std::size_t a = 0; a < params.size(); ++a) {
    Scalar* p = params[a].data;
    const Scalar* g = grads[a].data;
    Scalar* ma = m[a].data;
    Scalar* va = v[a].data;
    for (Eigen::Index i = 0; i < params[a].size; ++i) {
      ma[i] = b1 * ma[i] + (Scalar(1) - b1) * g[i];
      va[i] = b2 * va[i] + (Scalar(1) - b2) * g[i] * g[i];
      const Scalar mhat = ma[i] / bc1;
      const Scalar vhat = va[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// Plain SGD; momentum buffers are used only when momentum > 0.
template <class Scalar>
void sgd_step(const std::vector<ArrayView<Scalar>>& params, const std::vector<ArrayView<Scalar>>& grads,
              const std::vector<ArrayView<Scalar>>& momentum_bufs, const SgdConfig& cfg) {
  const Scalar lr = static_cast<Scalar>(cfg.lr);
  const Scalar mu = static_cast<Scalar>(cfg.momentum);
  for (std::size_t a = 0; a < params.size(); ++a) {
    Scalar* p = params[a].data;
    const Scalar* g = grads[a].data;
    if (cfg.momentum > 0.0) {
      Scalar* buf = momentum_bufs[a].data;
      for (Eigen::Index i = 0; i < params[a].size; ++i) {
        buf[i] = mu * buf[i] + g[i];
        p[i] -= lr * buf[i];
      }
    } else {
      for (Eigen::Index i = 0; i < params[a].size; ++i) p[i] -= lr * g[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Objective evaluation shared by training steps and the gradient suite
// ---------------------------------------------------------------------------

template <class Scalar>
struct SelectorObjective {
  std::optional<Scalar> adv_full;  // E[log D(s)] + E[log(1-D(S_K(v)))], needs a real summary
  std::optional<Scalar> adv_term;  // selector-side adversarial term
  Scalar reconst = Scalar(0);
  Scalar div = Scalar(0);
  std::optional<Scalar> psup;
  Scalar total = Scalar(0);
  double d_fake = 0.0;
  double d_real = 0.0;
  std::vector<int> indices;
  SelectorParams<Scalar> sel_grads;
  DiscriminatorParams<Scalar> disc_grads;
};

// Computes the preset-selected selector objective on one video, optionally
// with gradients for both parameter sets. When `real_summary` is given the
// adversarial part is the full minimax value over the (real, fake) pair;
// otherwise it is the selector-side term only (the real term is a constant
// for the selector).
template <class Scalar>
SelectorObjective<Scalar> evaluate_selector_objective(
    const SelectorParams<Scalar>& sel, const DiscriminatorParams<Scalar>* disc, const NetworkConfig& cfg,
    const LossWeights& weights, TermFlags flags, const FrameFeatureSequence<Scalar>& v,
    const SummaryFeatureSequence<Scalar>* real_summary, const KeyframeAnnotation* ann, bool is_paired,
    bool want_grads) {
  weights.validate();
  const int t = static_cast<int>(v.frames());
  const int k = std::min(cfg.selection_count(t), t);
  auto tr = selector_forward_traced(sel, cfg, v.features, k);
  const MatX<Scalar> merged_rows = tr.merged.transpose();

  SelectorObjective<Scalar> out;
  out.indices = tr.indices;

  const auto rec = reconstruction_loss_with_grad<Scalar>(merged_rows, tr.indices, v.features);
  out.reconst = rec.value;
  const auto div = diversity_loss_with_grad<Scalar>(merged_rows);
  out.div = div.value;

  std::optional<DiscriminatorTrace<Scalar>> fake_tr, real_tr;
  if (flags.adv) {
    if (disc == nullptr) throw ValidationError("adversarial term requires discriminator parameters");
    fake_tr = discriminator_forward_traced(*disc, cfg, merged_rows);
    out.d_fake = sigmoid<double>(static_cast<double>(fake_tr->logit));
    out.adv_term = selector_adversarial_term_from_logit(fake_tr->logit, weights.gan_objective);
    if (real_summary != nullptr) {
      real_tr = discriminator_forward_traced(*disc, cfg, real_summary->features);
      out.d_real = sigmoid<double>(static_cast<double>(real_tr->logit));
      out.adv_full = adversarial_loss_from_logits(real_tr->logit, fake_tr->logit);
    }
  }

  std::optional<ValueGrad<Scalar>> sup;
  if (flags.psup && is_paired) {
    if (ann == nullptr) throw ValidationError("paired video requires its key-frame annotation");
    sup = supervised_loss_with_grad<Scalar>(tr.scores, ann->mask);
    out.psup = sup->value;
  }

  out.total = Scalar(0);
  if (flags.reconst) out.total += out.reconst;
  if (flags.adv) out.total += out.adv_full.has_value() ? *out.adv_full : *out.adv_term;
  if (flags.div) out.total += static_cast<Scalar>(weights.beta) * out.div;
  if (out.psup.has_value()) out.total += static_cast<Scalar>(weights.gamma) * *out.psup;

  if (want_grads) {
    MatX<Scalar> d_merged_rows = MatX<Scalar>::Zero(merged_rows.rows(), merged_rows.cols());
    if (flags.reconst) d_merged_rows += rec.grad;
    if (flags.div) d_merged_rows += static_cast<Scalar>(weights.beta) * div.grad;
    if (flags.adv) {
      out.disc_grads = make_discriminator_params<Scalar>(cfg);
      // Coefficient on the fake logit inside `total`.
      const Scalar g_zf = out.adv_full.has_value() ? d_log_one_minus_sigmoid(fake_tr->logit)
                                                   : selector_adversarial_grad_logit(fake_tr->logit,
                                                                                     weights.gan_objective);
      auto fake_back = discriminator_backward(*disc, cfg, *fake_tr, g_zf, true);
      d_merged_rows += fake_back.d_input;
      auto fake_views = collect_arrays(fake_back.grads);
      auto acc_views = collect_arrays(out.disc_grads);
      for (std::size_t i = 0; i < acc_views.size(); ++i) {
        for (Eigen::Index j = 0; j < acc_views[i].size; ++j) acc_views[i].data[j] += fake_views[i].data[j];
      }
      if (real_tr.has_value()) {
        auto real_back = discriminator_backward(*disc, cfg, *real_tr, d_log_sigmoid(real_tr->logit), false);
        auto real_views = collect_arrays(real_back.grads);
        for (std::size_t i = 0; i < acc_views.size(); ++i) {
          for (Eigen::Index j = 0; j < acc_views[i].size; ++j) acc_views[i].data[j] += real_views[i].data[j];
        }
      }
    }
    MatX<Scalar> d_scores;
    if (sup.has_value()) d_scores = (static_cast<Scalar>(weights.gamma) * sup->grad).transpose();
    out.sel_grads = selector_backward(sel, cfg, tr, d_scores, MatX<Scalar>(d_merged_rows.transpose()));
  }
  return out;
}

template <class Scalar>
struct DiscriminatorObjective {
  Scalar adv = Scalar(0);  // full minimax value, which the discriminator ascends
  double d_real = 0.0;
  double d_fake = 0.0;
  DiscriminatorParams<Scalar> grads;  // gradient of -adv (descending maximizes adv)
};

template <class Scalar>
DiscriminatorObjective<Scalar> evaluate_discriminator_objective(const SelectorParams<Scalar>& sel,
                                                                const DiscriminatorParams<Scalar>& disc,
                                                                const NetworkConfig& cfg,
                                                                const FrameFeatureSequence<Scalar>& v,
                                                                const SummaryFeatureSequence<Scalar>& s,
                                                                bool want_grads) {
  const int t = static_cast<int>(v.frames());
  const int k = std::min(cfg.selection_count(t), t);
  const auto tr = selector_forward_traced(sel, cfg, v.features, k);
  const MatX<Scalar> fake_rows = tr.merged.transpose();
  const auto fake_tr = discriminator_forward_traced(disc, cfg, fake_rows);
  const auto real_tr = discriminator_forward_traced(disc, cfg, s.features);

  DiscriminatorObjective<Scalar> out;
  out.adv = adversarial_loss_from_logits(real_tr.logit, fake_tr.logit);
  out.d_real = sigmoid<double>(static_cast<double>(real_tr.logit));
  out.d_fake = sigmoid<double>(static_cast<double>(fake_tr.logit));
  if (want_grads) {
    out.grads = make_discriminator_params<Scalar>(cfg);
    // d(-adv)/dz_real = sigma(z_real) - 1, d(-adv)/dz_fake = sigma(z_fake).
    auto real_back = discriminator_backward(disc, cfg, real_tr, -d_log_sigmoid(real_tr.logit), false);
    auto fake_back = discriminator_backward(disc, cfg, fake_tr, -d_log_one_minus_sigmoid(fake_tr.logit), false);
    auto acc = collect_arrays(out.grads);
    auto a = collect_arrays(real_back.grads);
    auto b = collect_arrays(fake_back.grads);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      for (Eigen::Index j = 0; j < acc[i].size; ++j) acc[i].data[j] += a[i].data[j] + b[i].data[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  Preset preset = Preset::unpaired;
  int epochs = 50;
  std::uint64_t seed = 1;
  AdamConfig selector_opt;
  SgdConfig disc_opt;
  LossWeights weights;
  double psup_fraction = 0.0;
  bool clip_gradients = true;
  double clip_norm = 5.0;
  bool disc_step_first = true;

  void validate() const {
    if (epochs < 0) throw ValidationError("train: epochs must be >= 0");
    if (!(selector_opt.lr > 0) || !(disc_opt.lr >= 0)) throw ValidationError("train: learning rates must be positive");
    weights.validate();
    if (psup_fraction < 0 || psup_fraction > 1) throw ValidationError("train: psup_fraction must be in [0, 1]");
    if (psup_fraction > 0 && preset != Preset::unpaired_psup) {
      throw ValidationError("train: psup_fraction is only meaningful with preset unpaired_psup");
    }
    if (clip_norm <= 0) throw ValidationError("train: clip_norm must be positive");
  }

  void to_config(ConfigMap& cfg) const {
    cfg.set("train.preset", to_string(preset));
    cfg.set("train.epochs", std::to_string(epochs));
    cfg.set("train.seed", std::to_string(seed));
    cfg.set("train.selector_lr", std::to_string(selector_opt.lr));
    cfg.set("train.adam_beta1", std::to_string(selector_opt.beta1));
    cfg.set("train.adam_beta2", std::to_string(selector_opt.beta2));
    cfg.set("train.adam_eps", std::to_string(selector_opt.eps));
    cfg.set("train.disc_lr", std::to_string(disc_opt.lr));
    cfg.set("train.disc_momentum", std::to_string(disc_opt.momentum));
    cfg.set("train.beta", std::to_string(weights.beta));
    cfg.set("train.gamma", std::to_string(weights.gamma));
    cfg.set("train.gan_objective", to_string(weights.gan_objective));
    cfg.set("train.psup_fraction", std::to_string(psup_fraction));
    cfg.set("train.clip_gradients", clip_gradients ? "true" : "false");
    cfg.set("train.clip_norm", std::to_string(clip_norm));
    cfg.set("train.disc_step_first", disc_step_first ? "true" : "false");
  }

  static TrainConfig from_config(const ConfigMap& cfg) {
    TrainConfig out;
    out.preset = parse_preset(cfg.get_string("train.preset", to_string(out.preset)));
    out.epochs = static_cast<int>(cfg.get_int("train.epochs", out.epochs));
    out.seed = cfg.get_uint("train.seed", out.seed);
    out.selector_opt.lr = cfg.get_double("train.selector_lr", out.selector_opt.lr);
    out.selector_opt.beta1 = cfg.get_double("train.adam_beta1", out.selector_opt.beta1);
    out.selector_opt.beta2 = cfg.get_double("train.adam_beta2", out.selector_opt.beta2);
    out.selector_opt.eps = cfg.get_double("train.adam_eps", out.selector_opt.eps);
    out.disc_opt.lr = cfg.get_double("train.disc_lr", out.disc_opt.lr);
    out.disc_opt.momentum = cfg.get_double("train.disc_momentum", out.disc_opt.momentum);
    out.weights.beta = cfg.get_double("train.beta", out.weights.beta);
    out.weights.gamma = cfg.get_double("train.gamma", out.weights.gamma);
    out.weights.gan_objective = parse_gan_objective(cfg.get_string("train.gan_objective", "minimax"));
    out.psup_fraction = cfg.get_double("train.psup_fraction", out.psup_fraction);
    out.clip_gradients = cfg.get_bool("train.clip_gradients", out.clip_gradients);
    out.clip_norm = cfg.get_double("train.clip_norm", out.clip_norm);
    out.disc_step_first = cfg.get_bool("train.disc_step_first", out.disc_step_first);
    out.validate();
    return out;
  }
};

struct TrainState {
  long step = 0;
  int epoch = 0;
  SelectorParams<float> selector;
  DiscriminatorParams<float> discriminator;
  SelectorParams<float> adam_m, adam_v;
  long adam_t = 0;
  DiscriminatorParams<float> sgd_momentum;
  Rng rng{0};
};

inline TrainState init_train_state(const NetworkConfig& netcfg, const TrainConfig& cfg) {
  netcfg.validate();
  cfg.validate();
  TrainState st;
  auto [sel, disc] = init_params<float>(netcfg, cfg.seed);
  st.selector = std::move(sel);
  st.discriminator = std::move(disc);
  st.adam_m = make_selector_params<float>(netcfg);
  st.adam_v = make_selector_params<float>(netcfg);
  st.sgd_momentum = make_discriminator_params<float>(netcfg);
  st.rng = Rng(cfg.seed).fork(1);
  return st;
}

// One per-video metrics record (a JSONL line in the metrics log).
struct StepRecord {
  long step = 0;
  int epoch = 0;
  std::string video_id;
  std::optional<double> adv;
  double reconst = 0.0;
  double div = 0.0;
  std::optional<double> psup;
  double total = 0.0;
  std::optional<double> d_real_score;
  std::optional<double> d_fake_score;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["step"] = step;
    j["epoch"] = epoch;
    j["video_id"] = video_id;
    if (adv.has_value()) j["adv"] = *adv;
    j["reconst"] = reconst;
    j["div"] = div;
    if (psup.has_value()) j["psup"] = *psup;
    j["total"] = total;
    if (d_real_score.has_value()) j["d_real_score"] = *d_real_score;
    if (d_fake_score.has_value()) j["d_fake_score"] = *d_fake_score;
    return j;
  }
};

namespace detail {

inline void check_finite_or_abort(double value, const char* what, long step) {
  if (!std::isfinite(value)) {
    throw Error(std::string("training aborted: non-finite ") + what + " at step " + std::to_string(step));
  }
}

}  // namespace detail

// One discriminator update on the pair (raw video, real summary). The
// selector is evaluated but frozen.
struct DiscStepResult {
  double adv = 0.0;
  double d_real = 0.0;
  double d_fake = 0.0;
  bool clipped = false;
};

inline DiscStepResult train_step_discriminator(TrainState& state, const NetworkConfig& netcfg,
                                               const TrainConfig& cfg, const FrameFeatureSequence<float>& v,
                                               const SummaryFeatureSequence<float>& s) {
  auto obj = evaluate_discriminator_objective<float>(state.selector, state.discriminator, netcfg, v, s, true);
  detail::check_finite_or_abort(obj.adv, "adversarial loss", state.step);
  DiscStepResult out{obj.adv, obj.d_real, obj.d_fake, false};
  auto grads = collect_arrays(obj.grads);
  if (cfg.clip_gradients) out.clipped = clip_by_global_norm(grads, cfg.clip_norm);
  detail::check_finite_or_abort(global_grad_norm(grads), "discriminator gradient", state.step);
  sgd_step(collect_arrays(state.discriminator), grads, collect_arrays(state.sgd_momentum), cfg.disc_opt);
  return out;
}

// One Adam update of the selector under the preset's active loss terms.
struct SelStepResult {
  std::optional<double> adv;
  double reconst = 0.0;
  double div = 0.0;
  std::optional<double> psup;
  double total = 0.0;
  double d_fake = 0.0;
  bool clipped = false;
};

inline SelStepResult train_step_selector(TrainState& state, const NetworkConfig& netcfg, const TrainConfig& cfg,
                                         const FrameFeatureSequence<float>& v, bool is_paired,
                                         const KeyframeAnnotation* ann) {
  if (is_paired && ann == nullptr) throw ValidationError("train_step_selector: paired video without annotation");
  const TermFlags flags = preset_terms(cfg.preset);
  auto obj = evaluate_selector_objective<float>(state.selector, flags.adv ? &state.discriminator : nullptr, netcfg,
                                                cfg.weights, flags, v, nullptr, ann, is_paired, true);
  detail::check_finite_or_abort(obj.total, "selector loss", state.step);
  SelStepResult out;
  if (obj.adv_term.has_value()) out.adv = *obj.adv_term;
  out.reconst = obj.reconst;
  out.div = obj.div;
  if (obj.psup.has_value()) out.psup = *obj.psup;
  out.total = obj.total;
  out.d_fake = obj.d_fake;
  auto grads = collect_arrays(obj.sel_grads);
  if (cfg.clip_gradients) out.clipped = clip_by_global_norm(grads, cfg.clip_norm);
  detail::check_finite_or_abort(global_grad_norm(grads), "selector gradient", state.step);
  ++state.adam_t;
  adam_step(collect_arrays(state.selector), grads, collect_arrays(state.adam_m), collect_arrays(state.adam_v),
            state.adam_t, cfg.selector_opt);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpointing of full training state
// ---------------------------------------------------------------------------

inline void save_train_checkpoint(const std::string& path, const NetworkConfig& netcfg, const TrainState& state) {
  ConfigMap cfg;
  netcfg.to_config(cfg);
  cfg.set("trainer.step", std::to_string(state.step));
  cfg.set("trainer.epoch", std::to_string(state.epoch));
  cfg.set("trainer.adam_t", std::to_string(state.adam_t));
  char hex[19];
  std::snprintf(hex, sizeof(hex), "0x%016llx", static_cast<unsigned long long>(state.rng.state()));
  cfg.set("trainer.rng_state", hex);

  std::vector<ArrayRecord> records;
  auto& st = const_cast<TrainState&>(state);
  append_array_records(records, collect_arrays(st.selector, "sel."));
  append_array_records(records, collect_arrays(st.discriminator, "disc."));
  append_array_records(records, collect_arrays(st.adam_m, "adam_m."));
  append_array_records(records, collect_arrays(st.adam_v, "adam_v."));
  append_array_records(records, collect_arrays(st.sgd_momentum, "sgd_momentum."));
  write_checkpoint(path, cfg.serialize(), records);
}

struct LoadedTrainCheckpoint {
  NetworkConfig network;
  TrainState state;
};

inline LoadedTrainCheckpoint load_train_checkpoint(const std::string& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  const ConfigMap cfg = ConfigMap::parse_text(ckpt.config_text);
  LoadedTrainCheckpoint out;
  out.network = NetworkConfig::from_config(cfg);
  out.state.step = cfg.get_int("trainer.step", 0);
  out.state.epoch = static_cast<int>(cfg.get_int("trainer.epoch", 0));
  out.state.adam_t = cfg.get_int("trainer.adam_t", 0);
  out.state.rng = Rng(cfg.get_uint("trainer.rng_state", 0));
  out.state.selector = make_selector_params<float>(out.network);
  out.state.discriminator = make_discriminator_params<float>(out.network);
  out.state.adam_m = make_selector_params<float>(out.network);
  out.state.adam_v = make_selector_params<float>(out.network);
  out.state.sgd_momentum = make_discriminator_params<float>(out.network);
  load_array_records(ckpt, collect_arrays(out.state.selector, "sel."), path);
  load_array_records(ckpt, collect_arrays(out.state.discriminator, "disc."), path);
  load_array_records(ckpt, collect_arrays(out.state.adam_m, "adam_m."), path);
  load_array_records(ckpt, collect_arrays(out.state.adam_v, "adam_v."), path);
  load_array_records(ckpt, collect_arrays(out.state.sgd_momentum, "sgd_momentum."), path);
  return out;
}

// Reads just the model parameters (evaluation/summarization path); works on
// any checkpoint written by the trainer.
struct LoadedModel {
  NetworkConfig network;
  SelectorParams<float> selector;
  DiscriminatorParams<float> discriminator;
};

inline LoadedModel load_model_checkpoint(const std::string& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  const ConfigMap cfg = ConfigMap::parse_text(ckpt.config_text);
  LoadedModel out;
  out.network = NetworkConfig::from_config(cfg);
  out.selector = make_selector_params<float>(out.network);
  out.discriminator = make_discriminator_params<float>(out.network);
  load_array_records(ckpt, collect_arrays(out.selector, "sel."), path);
  load_array_records(ckpt, collect_arrays(out.discriminator, "disc."), path);
  return out;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainSinks {
  std::ostream* metrics = nullptr;   // JSONL, one record per raw video
  std::string checkpoint_dir;       // per-epoch checkpoints when nonempty
};

// Runs epochs [state.epoch, cfg.epochs). One epoch visits every raw video in
// a seeded shuffled order; per video it samples one real summary uniformly,
// runs one discriminator step and one selector step (order per config), and
// emits one metrics record.
inline void train_epochs(TrainState& state, const UnpairedDataset<float>& dataset, const NetworkConfig& netcfg,
                         const TrainConfig& cfg, const TrainSinks& sinks) {
  netcfg.validate();
  cfg.validate();
  dataset.validate();
  const TermFlags flags = preset_terms(cfg.preset);
  const int m = static_cast<int>(dataset.raw_videos.size());
  const int n = static_cast<int>(dataset.real_summaries.size());
  if (m < 1) throw ValidationError("train: dataset has no raw videos");
  if (flags.adv && n < 1) throw ValidationError("train: adversarial preset requires real summaries");

  std::unordered_map<int, const KeyframeAnnotation*> paired;
  if (flags.psup) {
    for (const auto& p : dataset.paired_subset) paired[p.raw_index] = &p.annotation;
  }

  const auto save_epoch_checkpoint = [&]() {
    if (sinks.checkpoint_dir.empty()) return;
    char name[64];
    std::snprintf(name, sizeof(name), "ckpt_epoch_%04d.uvsc", state.epoch);
    save_train_checkpoint((std::filesystem::path(sinks.checkpoint_dir) / name).string(), netcfg, state);
  };

  std::vector<int> order(m);
  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    for (int i = 0; i < m; ++i) order[i] = i;
    state.rng.shuffle(order);
    for (int idx : order) {
      const auto& v = dataset.raw_videos[idx];
      ++state.step;
      StepRecord rec;
      rec.step = state.step;
      rec.epoch = epoch;
      rec.video_id = v.video_id;

      const auto it = paired.find(idx);
      const bool is_paired = it != paired.end();
      const KeyframeAnnotation* ann = is_paired ? it->second : nullptr;

      const auto run_selector = [&]() {
        const auto r = train_step_selector(state, netcfg, cfg, v, is_paired, ann);
        rec.adv = r.adv;
        rec.reconst = r.reconst;
        rec.div = r.div;
        rec.psup = r.psup;
        rec.total = r.total;
        if (r.clipped) std::cerr << "uvsn: selector gradient clipped at step " << state.step << "\n";
      };
      const auto run_discriminator = [&]() {
        const auto& s = dataset.real_summaries[state.rng.below(static_cast<std::uint64_t>(n))];
        const auto r = train_step_discriminator(state, netcfg, cfg, v, s);
        rec.d_real_score = r.d_real;
        rec.d_fake_score = r.d_fake;
        if (r.clipped) std::cerr << "uvsn: discriminator gradient clipped at step " << state.step << "\n";
      };

      if (flags.adv && cfg.disc_step_first) run_discriminator();
      run_selector();
      if (flags.adv && !cfg.disc_step_first) run_discriminator();

      if (sinks.metrics != nullptr) *sinks.metrics << rec.to_json().dump() << "\n";
    }
    state.epoch = epoch + 1;
    save_epoch_checkpoint();
  }
  if (sinks.metrics != nullptr) sinks.metrics->flush();
}

// Fresh training run: init, train, return the final state.
inline TrainState train(const UnpairedDataset<float>& dataset, const NetworkConfig& netcfg, const TrainConfig& cfg,
                        const TrainSinks& sinks = {}) {
  TrainState state = init_train_state(netcfg, cfg);
  train_epochs(state, dataset, netcfg, cfg, sinks);
  return state;
}

}  // namespace uvsn
