#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "uvsn/config.hpp"
#include "uvsn/errors.hpp"
#include "uvsn/rng.hpp"
#include "uvsn/types.hpp"

namespace uvsn {

// Class layout of per-frame scores: column 0 is the key-frame class.
inline constexpr int kKeyClass = 0;
inline constexpr int kNonKeyClass = 1;

// Per-frame class scores, T x 2 (key / non-key).
template <class Scalar>
using FrameScores = MatX<Scalar>;

struct NetworkConfig {
  int feature_dim = 1024;
  std::vector<int> encoder_channels = {64, 128, 256, 256};
  int encoder_depth = 4;
  int kernel_size = 3;
  double k_ratio = 0.15;  // selected frames as a fraction of T

  // Discriminator encoder; empty/zero mirrors the selector encoder.
  std::vector<int> disc_channels = {};
  int disc_depth = 0;

  int effective_disc_depth() const { return disc_depth > 0 ? disc_depth : encoder_depth; }

  std::vector<int> effective_disc_channels() const {
    return disc_channels.empty() ? std::vector<int>(encoder_channels.begin(),
                                                    encoder_channels.begin() + effective_disc_depth())
                                 : disc_channels;
  }

  // Budgeted selection size for a T-frame video.
  int selection_count(int t) const { return std::max(1, static_cast<int>(std::lround(k_ratio * t))); }

  // Encoded summaries must survive `disc_depth` halvings without padding.
  int min_summary_frames() const { return 1 << effective_disc_depth(); }

  int total_pool_factor() const { return 1 << encoder_depth; }

  void validate() const {
    if (feature_dim < 1) throw ValidationError("network: feature_dim >= 1 required");
    if (encoder_depth < 1) throw ValidationError("network: encoder_depth >= 1 required");
    if (static_cast<int>(encoder_channels.size()) != encoder_depth) {
      throw ValidationError("network: encoder_channels size " + std::to_string(encoder_channels.size()) +
                            " != encoder_depth " + std::to_string(encoder_depth));
    }
    for (int c : encoder_channels) {
      if (c < 1) throw ValidationError("network: encoder channel widths must be >= 1");
    }
    if (kernel_size < 1 || kernel_size % 2 == 0) {
      throw ValidationError("network: kernel_size must be odd and >= 1, got " + std::to_string(kernel_size));
    }
    if (!(k_ratio > 0.0 && k_ratio <= 1.0)) {
      throw ValidationError("network: k_ratio must be in (0, 1], got " + std::to_string(k_ratio));
    }
    const int dd = effective_disc_depth();
    const auto dc = effective_disc_channels();
    if (dd < 1 || static_cast<int>(dc.size()) != dd) {
      throw ValidationError("network: disc_channels size must equal disc_depth");
    }
    for (int c : dc) {
      if (c < 1) throw ValidationError("network: disc channel widths must be >= 1");
    }
  }

  void to_config(ConfigMap& cfg) const {
    cfg.set("network.feature_dim", std::to_string(feature_dim));
    std::string ch;
    for (std::size_t i = 0; i < encoder_channels.size(); ++i) ch += (i ? "," : "") + std::to_string(encoder_channels[i]);
    cfg.set("network.encoder_channels", ch);
    cfg.set("network.encoder_depth", std::to_string(encoder_depth));
    cfg.set("network.kernel_size", std::to_string(kernel_size));
    cfg.set("network.k_ratio", std::to_string(k_ratio));
    std::string dch;
    for (std::size_t i = 0; i < disc_channels.size(); ++i) dch += (i ? "," : "") + std::to_string(disc_channels[i]);
    if (!dch.empty()) cfg.set("network.disc_channels", dch);
    if (disc_depth > 0) cfg.set("network.disc_depth", std::to_string(disc_depth));
  }

  static NetworkConfig from_config(const ConfigMap& cfg) {
    NetworkConfig out;
    out.feature_dim = static_cast<int>(cfg.get_int("network.feature_dim", out.feature_dim));
    out.encoder_channels = cfg.get_int_list("network.encoder_channels", out.encoder_channels);
    out.encoder_depth = static_cast<int>(cfg.get_int("network.encoder_depth", out.encoder_channels.size()));
    out.kernel_size = static_cast<int>(cfg.get_int("network.kernel_size", out.kernel_size));
    out.k_ratio = cfg.get_double("network.k_ratio", out.k_ratio);
    out.disc_channels = cfg.get_int_list("network.disc_channels", out.disc_channels);
    out.disc_depth = static_cast<int>(cfg.get_int("network.disc_depth", out.disc_depth));
    out.validate();
    return out;
  }
};

// ---------------------------------------------------------------------------
// Layers. Activations are channels x time matrices.
// ---------------------------------------------------------------------------

// Temporal convolution, stride 1, symmetric zero padding. w[u] is the
// C_out x C_in tap at offset u - K/2.
template <class Scalar>
struct Conv1d {
  std::vector<MatX<Scalar>> w;
  VecX<Scalar> b;
};

// Temporal transposed convolution with kernel == stride == w.size():
// out[:, t*s + j] = w[j] * in[:, t] + b.
template <class Scalar>
struct Deconv1d {
  std::vector<MatX<Scalar>> w;
  VecX<Scalar> b;

  int stride() const { return static_cast<int>(w.size()); }
};

template <class Scalar>
MatX<Scalar> conv1d_forward(const Conv1d<Scalar>& c, const MatX<Scalar>& in) {
  const int k = static_cast<int>(c.w.size());
  const int pad = k / 2;
  const Eigen::Index t = in.cols();
  MatX<Scalar> out = c.b.replicate(1, t);
  for (int u = 0; u < k; ++u) {
    const int off = u - pad;
    const Eigen::Index lo = std::max<Eigen::Index>(0, -off);
    const Eigen::Index hi = std::min<Eigen::Index>(t, t - off);
    if (hi > lo) out.middleCols(lo, hi - lo) += c.w[u] * in.middleCols(lo + off, hi - lo);
  }
  return out;
}

template <class Scalar>
void conv1d_backward(const Conv1d<Scalar>& c, const MatX<Scalar>& in, const MatX<Scalar>& d_out,
                     Conv1d<Scalar>& grads, MatX<Scalar>* d_in) {
  const int k = static_cast<int>(c.w.size());
  const int pad = k / 2;
  const Eigen::Index t = in.cols();
  grads.b += d_out.rowwise().sum();
  for (int u = 0; u < k; ++u) {
    const int off = u - pad;
    const Eigen::Index lo = std::max<Eigen::Index>(0, -off);
    const Eigen::Index hi = std::min<Eigen::Index>(t, t - off);
    if (hi <= lo) continue;
    grads.w[u] += d_out.middleCols(lo, hi - lo) * in.middleCols(lo + off, hi - lo).transpose();
    if (d_in) d_in->middleCols(lo + off, hi - lo) += c.w[u].transpose() * d_out.middleCols(lo, hi - lo);
  }
}

template <class Scalar>
MatX<Scalar> relu(const MatX<Scalar>& in) {
  return in.cwiseMax(Scalar(0));
}

template <class Scalar>
MatX<Scalar> relu_backward(const MatX<Scalar>& pre_activation, const MatX<Scalar>& d_out) {
  return (pre_activation.array() > Scalar(0)).select(d_out, MatX<Scalar>::Zero(d_out.rows(), d_out.cols()));
}

// Temporal max pooling, window 2, stride 2, floor semantics (an odd tail
// column does not reach the next scale). Ties pick the left element, which
// keeps replicated padding deterministic.
struct PoolPick {
  Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic> right;  // 1 where the right column won
  int len_in = 0;
};

template <class Scalar>
MatX<Scalar> maxpool2_forward(const MatX<Scalar>& in, PoolPick& pick) {
  const Eigen::Index c = in.rows();
  const Eigen::Index t_out = in.cols() / 2;
  MatX<Scalar> out(c, t_out);
  pick.right.resize(c, t_out);
  pick.len_in = static_cast<int>(in.cols());
  for (Eigen::Index t = 0; t < t_out; ++t) {
    for (Eigen::Index r = 0; r < c; ++r) {
      const Scalar a = in(r, 2 * t), b = in(r, 2 * t + 1);
      const bool take_right = b > a;
      out(r, t) = take_right ? b : a;
      pick.right(r, t) = take_right ? 1 : 0;
    }
  }
  return out;
}

template <class Scalar>
MatX<Scalar> maxpool2_backward(const PoolPick& pick, const MatX<Scalar>& d_out) {
  MatX<Scalar> d_in = MatX<Scalar>::Zero(d_out.rows(), pick.len_in);
  for (Eigen::Index t = 0; t < d_out.cols(); ++t) {
    for (Eigen::Index r = 0; r < d_out.rows(); ++r) {
      d_in(r, 2 * t + pick.right(r, t)) += d_out(r, t);
    }
  }
  return d_in;
}

template <class Scalar>
MatX<Scalar> deconv_forward(const Deconv1d<Scalar>& d, const MatX<Scalar>& in) {
  const int s = d.stride();
  const Eigen::Index t = in.cols();
  MatX<Scalar> out(d.b.size(), t * s);
  for (int j = 0; j < s; ++j) {
    const MatX<Scalar> tmp = d.w[j] * in;
    for (Eigen::Index i = 0; i < t; ++i) out.col(i * s + j) = tmp.col(i) + d.b;
  }
  return out;
}

template <class Scalar>
void deconv_backward(const Deconv1d<Scalar>& d, const MatX<Scalar>& in, const MatX<Scalar>& d_out,
                     Deconv1d<Scalar>& grads, MatX<Scalar>* d_in) {
  const int s = d.stride();
  const Eigen::Index t = in.cols();
  MatX<Scalar> gathered(d.b.size(), t);
  for (int j = 0; j < s; ++j) {
    for (Eigen::Index i = 0; i < t; ++i) gathered.col(i) = d_out.col(i * s + j);
    grads.w[j] += gathered * in.transpose();
    grads.b += gathered.rowwise().sum();
    if (d_in) *d_in += d.w[j].transpose() * gathered;
  }
}

// Fit a sequence to `target` columns: crop from the right, or extend by
// replicating the last column.
template <class Scalar>
MatX<Scalar> crop_or_extend(const MatX<Scalar>& in, Eigen::Index target) {
  if (in.cols() == target) return in;
  if (in.cols() > target) return in.leftCols(target);
  MatX<Scalar> out(in.rows(), target);
  out.leftCols(in.cols()) = in;
  for (Eigen::Index t = in.cols(); t < target; ++t) out.col(t) = in.col(in.cols() - 1);
  return out;
}

template <class Scalar>
MatX<Scalar> crop_or_extend_backward(const MatX<Scalar>& d_out, Eigen::Index len_in) {
  if (len_in == d_out.cols()) return d_out;
  if (len_in > d_out.cols()) {
    MatX<Scalar> d_in = MatX<Scalar>::Zero(d_out.rows(), len_in);
    d_in.leftCols(d_out.cols()) = d_out;
    return d_in;
  }
  MatX<Scalar> d_in = d_out.leftCols(len_in);
  for (Eigen::Index t = len_in; t < d_out.cols(); ++t) d_in.col(len_in - 1) += d_out.col(t);
  return d_in;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <class Scalar>
struct SelectorParams {
  std::vector<Conv1d<Scalar>> encoder;
  Deconv1d<Scalar> up1, up2;
  MatX<Scalar> score_w;  // 2 x C_dec
  VecX<Scalar> score_b;
  MatX<Scalar> recon_w;  // D x C_dec
  VecX<Scalar> recon_b;
};

template <class Scalar>
struct DiscriminatorParams {
  std::vector<Conv1d<Scalar>> encoder;
  VecX<Scalar> fc_w;
  Scalar fc_b = Scalar(0);
};

namespace detail {

template <class Scalar>
Conv1d<Scalar> make_conv(int c_in, int c_out, int k) {
  Conv1d<Scalar> c;
  c.w.assign(k, MatX<Scalar>::Zero(c_out, c_in));
  c.b = VecX<Scalar>::Zero(c_out);
  return c;
}

template <class Scalar>
Deconv1d<Scalar> make_deconv(int c_in, int c_out, int stride) {
  Deconv1d<Scalar> d;
  d.w.assign(stride, MatX<Scalar>::Zero(c_out, c_in));
  d.b = VecX<Scalar>::Zero(c_out);
  return d;
}

}  // namespace detail

// The FCN-style decoder splits the total upsampling into two stages around a
// skip connection from the mid-encoder block.
inline int skip_block_index(const NetworkConfig& cfg) { return cfg.encoder_depth / 2; }

template <class Scalar>
SelectorParams<Scalar> make_selector_params(const NetworkConfig& cfg) {
  cfg.validate();
  SelectorParams<Scalar> p;
  int c_in = cfg.feature_dim;
  for (int i = 0; i < cfg.encoder_depth; ++i) {
    p.encoder.push_back(detail::make_conv<Scalar>(c_in, cfg.encoder_channels[i], cfg.kernel_size));
    c_in = cfg.encoder_channels[i];
  }
  const int mid = skip_block_index(cfg);
  const int skip_ch = mid == 0 ? cfg.feature_dim : cfg.encoder_channels[mid - 1];
  const int dec_ch = cfg.encoder_channels[0];
  p.up1 = detail::make_deconv<Scalar>(cfg.encoder_channels[cfg.encoder_depth - 1], skip_ch, 1 << (cfg.encoder_depth - mid));
  p.up2 = detail::make_deconv<Scalar>(skip_ch, dec_ch, std::max(1, 1 << mid));
  p.score_w = MatX<Scalar>::Zero(2, dec_ch);
  p.score_b = VecX<Scalar>::Zero(2);
  p.recon_w = MatX<Scalar>::Zero(cfg.feature_dim, dec_ch);
  p.recon_b = VecX<Scalar>::Zero(cfg.feature_dim);
  return p;
}

template <class Scalar>
DiscriminatorParams<Scalar> make_discriminator_params(const NetworkConfig& cfg) {
  cfg.validate();
  DiscriminatorParams<Scalar> p;
  int c_in = cfg.feature_dim;
  const auto channels = cfg.effective_disc_channels();
  for (int c : channels) {
    p.encoder.push_back(detail::make_conv<Scalar>(c_in, c, cfg.kernel_size));
    c_in = c;
  }
  p.fc_w = VecX<Scalar>::Zero(c_in);
  p.fc_b = Scalar(0);
  return p;
}

// Flat named view over every parameter array; the walk order is fixed, so
// optimizers, checkpoints and gradient checks all agree.
template <class Scalar>
struct ArrayView {
  std::string name;
  Scalar* data = nullptr;
  std::vector<std::uint32_t> dims;  // column-major payload
  Eigen::Index size = 0;
};

namespace detail {

template <class Scalar, class M>
void push_view(std::vector<ArrayView<Scalar>>& out, std::string name, M& m) {
  out.push_back({std::move(name), const_cast<Scalar*>(m.data()),
                 {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
                 m.size()});
}

}  // namespace detail

template <class Scalar>
std::vector<ArrayView<Scalar>> collect_arrays(SelectorParams<Scalar>& p, const std::string& prefix = "sel.") {
  std::vector<ArrayView<Scalar>> out;
  for (std::size_t i = 0; i < p.encoder.size(); ++i) {
    for (std::size_t u = 0; u < p.encoder[i].w.size(); ++u) {
      detail::push_view(out, prefix + "enc" + std::to_string(i) + ".w" + std::to_string(u), p.encoder[i].w[u]);
    }
    detail::push_view(out, prefix + "enc" + std::to_string(i) + ".b", p.encoder[i].b);
  }
  for (std::size_t u = 0; u < p.up1.w.size(); ++u) {
    detail::push_view(out, prefix + "up1.w" + std::to_string(u), p.up1.w[u]);
  }
  detail::push_view(out, prefix + "up1.b", p.up1.b);
  for (std::size_t u = 0; u < p.up2.w.size(); ++u) {
    detail::push_view(out, prefix + "up2.w" + std::to_string(u), p.up2.w[u]);
  }
  detail::push_view(out, prefix + "up2.b", p.up2.b);
  detail::push_view(out, prefix + "score.w", p.score_w);
  detail::push_view(out, prefix + "score.b", p.score_b);
  detail::push_view(out, prefix + "recon.w", p.recon_w);
  detail::push_view(out, prefix + "recon.b", p.recon_b);
  return out;
}

template <class Scalar>
std::vector<ArrayView<Scalar>> collect_arrays(DiscriminatorParams<Scalar>& p, const std::string& prefix = "disc.") {
  std::vector<ArrayView<Scalar>> out;
  for (std::size_t i = 0; i < p.encoder.size(); ++i) {
    for (std::size_t u = 0; u < p.encoder[i].w.size(); ++u) {
      detail::push_view(out, prefix + "enc" + std::to_string(i) + ".w" + std::to_string(u), p.encoder[i].w[u]);
    }
    detail::push_view(out, prefix + "enc" + std::to_string(i) + ".b", p.encoder[i].b);
  }
  detail::push_view(out, prefix + "fc.w", p.fc_w);
  out.push_back({prefix + "fc.b", &p.fc_b, {1, 1}, 1});
  return out;
}

// Fan-in scaled uniform init (std 1/sqrt(fan_in)), zero biases.
template <class Scalar>
std::pair<SelectorParams<Scalar>, DiscriminatorParams<Scalar>> init_params(const NetworkConfig& cfg,
                                                                           std::uint64_t seed) {
  auto sel = make_selector_params<Scalar>(cfg);
  auto disc = make_discriminator_params<Scalar>(cfg);
  Rng rng(seed);
  const auto fill = [&rng](MatX<Scalar>& m, double fan_in) {
    const double bound = std::sqrt(3.0 / fan_in);
    Scalar* d = m.data();
    for (Eigen::Index i = 0; i < m.size(); ++i) d[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  };
  for (auto& block : sel.encoder) {
    const double fan_in = static_cast<double>(block.w[0].cols()) * block.w.size();
    for (auto& w : block.w) fill(w, fan_in);
  }
  for (auto& w : sel.up1.w) fill(w, static_cast<double>(sel.up1.w[0].cols()));
  for (auto& w : sel.up2.w) fill(w, static_cast<double>(sel.up2.w[0].cols()));
  fill(sel.score_w, static_cast<double>(sel.score_w.cols()));
  fill(sel.recon_w, static_cast<double>(sel.recon_w.cols()));
  for (auto& block : disc.encoder) {
    const double fan_in = static_cast<double>(block.w[0].cols()) * block.w.size();
    for (auto& w : block.w) fill(w, fan_in);
  }
  MatX<Scalar> fcw = disc.fc_w;
  fill(fcw, static_cast<double>(disc.fc_w.size()));
  disc.fc_w = fcw;
  return {std::move(sel), std::move(disc)};
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

template <class Scalar>
struct BlockCache {
  MatX<Scalar> conv_in;
  MatX<Scalar> conv_out;  // pre-activation
  MatX<Scalar> pool_out;
  PoolPick pick;
};

namespace detail {

template <class Scalar>
MatX<Scalar> run_encoder(const std::vector<Conv1d<Scalar>>& blocks, const MatX<Scalar>& input,
                         std::vector<BlockCache<Scalar>>& caches) {
  caches.clear();
  caches.resize(blocks.size());
  MatX<Scalar> x = input;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto& c = caches[i];
    c.conv_in = x;
    c.conv_out = conv1d_forward(blocks[i], c.conv_in);
    c.pool_out = maxpool2_forward(MatX<Scalar>(relu(c.conv_out)), c.pick);
    x = c.pool_out;
  }
  return x;
}

// Back-propagates through the encoder stack. d_pool[i] is the incoming
// gradient at block i's pool output (callers may have injected skip
// gradients). Returns the gradient at the encoder input when requested.
template <class Scalar>
MatX<Scalar> encoder_backward(const std::vector<Conv1d<Scalar>>& blocks, const std::vector<BlockCache<Scalar>>& caches,
                              std::vector<MatX<Scalar>>& d_pool, std::vector<Conv1d<Scalar>>& grads,
                              bool want_input_grad) {
  MatX<Scalar> d_input;
  for (int i = static_cast<int>(blocks.size()) - 1; i >= 0; --i) {
    const auto& c = caches[i];
    const MatX<Scalar> d_relu = maxpool2_backward(c.pick, d_pool[i]);
    const MatX<Scalar> d_conv = relu_backward(c.conv_out, d_relu);
    const bool need_d_in = i > 0 || want_input_grad;
    MatX<Scalar> d_in;
    if (need_d_in) d_in = MatX<Scalar>::Zero(c.conv_in.rows(), c.conv_in.cols());
    conv1d_backward(blocks[i], c.conv_in, d_conv, grads[i], need_d_in ? &d_in : nullptr);
    if (i > 0) {
      d_pool[i - 1] += d_in;
    } else if (want_input_grad) {
      d_input = std::move(d_in);
    }
  }
  return d_input;
}

}  // namespace detail

template <class Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

// Key-class probability per frame: p_t = softmax(delta_t)[key].
template <class Scalar>
VecX<Scalar> key_probabilities(const FrameScores<Scalar>& scores) {
  if (scores.cols() != 2) throw ValidationError("frame scores must be T x 2");
  VecX<Scalar> p(scores.rows());
  for (Eigen::Index t = 0; t < scores.rows(); ++t) {
    p(t) = sigmoid<Scalar>(scores(t, kKeyClass) - scores(t, kNonKeyClass));
  }
  return p;
}

// The k indices with the largest key probability; ties prefer the smaller
// index; the result is ascending.
template <class Scalar>
std::vector<int> select_keyframes(const FrameScores<Scalar>& scores, int k) {
  const int t = static_cast<int>(scores.rows());
  if (k < 1 || k > t) {
    throw ValidationError("select_keyframes: need 1 <= k <= T, got k=" + std::to_string(k) +
                          " T=" + std::to_string(t));
  }
  const VecX<Scalar> p = key_probabilities(scores);
  std::vector<int> order(t);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p(a) > p(b); });
  std::vector<int> picked(order.begin(), order.begin() + k);
  std::sort(picked.begin(), picked.end());
  return picked;
}

template <class Scalar>
struct SelectorTrace {
  int t = 0;         // original length
  int t_padded = 0;  // >= 2^depth
  int k = 0;
  MatX<Scalar> input;  // D x t_padded
  std::vector<BlockCache<Scalar>> blocks;
  MatX<Scalar> up1_raw, up1_fit, skip_sum, act1, up2_raw, dec;
  FrameScores<Scalar> scores;  // T x 2 (padding removed)
  VecX<Scalar> key_prob;       // length T
  std::vector<int> indices;    // ascending, size k
  MatX<Scalar> dec_sel;        // C_dec x k
  MatX<Scalar> recon;          // D x k, reconstruction head output
  MatX<Scalar> merged;         // D x k, recon + input rows at indices
};

template <class Scalar>
void check_selector_shapes(const SelectorParams<Scalar>& p, const NetworkConfig& cfg, Eigen::Index input_dim) {
  if (static_cast<int>(p.encoder.size()) != cfg.encoder_depth) {
    throw ValidationError("selector params: encoder depth mismatch with config");
  }
  if (p.encoder[0].w.empty() || p.encoder[0].w[0].cols() != input_dim) {
    throw ValidationError("selector params: input dimension mismatch (params expect D=" +
                          std::to_string(p.encoder[0].w.empty() ? -1 : p.encoder[0].w[0].cols()) + ", input has D=" +
                          std::to_string(input_dim) + ")");
  }
}

// Full selector pass: encoder, two-stage decoder with skip-add, score head
// over every frame, hard top-k selection, reconstruction head at the
// selected frames merged (element-wise sum) with the input skip connection.
template <class Scalar, class Derived>
SelectorTrace<Scalar> selector_forward_traced(const SelectorParams<Scalar>& params, const NetworkConfig& cfg,
                                              const Eigen::MatrixBase<Derived>& feature_rows, int k) {
  cfg.validate();
  check_selector_shapes(params, cfg, feature_rows.cols());
  const int t = static_cast<int>(feature_rows.rows());
  if (t < 1) throw ValidationError("selector_forward: empty input");
  if (k < 1 || k > t) {
    throw ValidationError("selector_forward: need 1 <= k <= T, got k=" + std::to_string(k) +
                          " T=" + std::to_string(t));
  }

  SelectorTrace<Scalar> tr;
  tr.t = t;
  tr.k = k;
  tr.t_padded = std::max(t, cfg.total_pool_factor());
  tr.input = crop_or_extend(MatX<Scalar>(feature_rows.transpose().template cast<Scalar>()), tr.t_padded);

  const MatX<Scalar> bottom = detail::run_encoder(params.encoder, tr.input, tr.blocks);

  const int mid = skip_block_index(cfg);
  const MatX<Scalar>& skip_src = mid == 0 ? tr.input : tr.blocks[mid - 1].pool_out;
  tr.up1_raw = deconv_forward(params.up1, bottom);
  tr.up1_fit = crop_or_extend(tr.up1_raw, skip_src.cols());
  tr.skip_sum = tr.up1_fit + skip_src;
  tr.act1 = relu(tr.skip_sum);
  tr.up2_raw = deconv_forward(params.up2, tr.act1);
  tr.dec = crop_or_extend(tr.up2_raw, tr.t_padded);

  // Scores on the original frames only; padded columns carry no prediction.
  const MatX<Scalar> scores_full = params.score_w * tr.dec.leftCols(t);
  tr.scores = scores_full.transpose();
  tr.scores.col(0).array() += params.score_b(0);
  tr.scores.col(1).array() += params.score_b(1);
  tr.key_prob = key_probabilities(tr.scores);
  tr.indices = select_keyframes(tr.scores, k);

  tr.dec_sel.resize(tr.dec.rows(), k);
  tr.merged.resize(cfg.feature_dim, k);
  for (int i = 0; i < k; ++i) tr.dec_sel.col(i) = tr.dec.col(tr.indices[i]);
  tr.recon = params.recon_w * tr.dec_sel + params.recon_b.replicate(1, k);
  for (int i = 0; i < k; ++i) tr.merged.col(i) = tr.recon.col(i) + tr.input.col(tr.indices[i]);
  return tr;
}

template <class Scalar>
struct SelectorOutput {
  FrameScores<Scalar> scores;
  SummaryFeatureSequence<Scalar> summary;
};

template <class Scalar>
SelectorOutput<Scalar> selector_forward(const SelectorParams<Scalar>& params, const NetworkConfig& cfg,
                                        const FrameFeatureSequence<Scalar>& v, int k) {
  v.validate();
  auto tr = selector_forward_traced(params, cfg, v.features, k);
  SelectorOutput<Scalar> out;
  out.scores = std::move(tr.scores);
  out.summary.video_id = v.video_id;
  out.summary.selected_indices = tr.indices;
  out.summary.features = tr.merged.transpose();
  return out;
}

// Gradients of a loss with respect to every selector parameter, given the
// loss gradients at the score head (T x 2, may be empty) and at the merged
// summary features (D x k, may be empty). Hard selection is treated as
// locally constant: gradients enter only at the selected positions.
template <class Scalar>
SelectorParams<Scalar> selector_backward(const SelectorParams<Scalar>& params, const NetworkConfig& cfg,
                                         const SelectorTrace<Scalar>& tr, const MatX<Scalar>& d_scores,
                                         const MatX<Scalar>& d_merged) {
  auto grads = make_selector_params<Scalar>(cfg);
  MatX<Scalar> d_dec = MatX<Scalar>::Zero(tr.dec.rows(), tr.dec.cols());

  if (d_merged.size() > 0) {
    if (d_merged.rows() != tr.merged.rows() || d_merged.cols() != tr.merged.cols()) {
      throw ValidationError("selector_backward: d_merged shape mismatch");
    }
    grads.recon_w += d_merged * tr.dec_sel.transpose();
    grads.recon_b += d_merged.rowwise().sum();
    const MatX<Scalar> d_dec_sel = params.recon_w.transpose() * d_merged;
    for (int i = 0; i < tr.k; ++i) d_dec.col(tr.indices[i]) += d_dec_sel.col(i);
  }

  if (d_scores.size() > 0) {
    if (d_scores.rows() != 2 || d_scores.cols() != tr.t) {
      throw ValidationError("selector_backward: d_scores must be 2 x T");
    }
    grads.score_w += d_scores * tr.dec.leftCols(tr.t).transpose();
    grads.score_b += d_scores.rowwise().sum();
    d_dec.leftCols(tr.t) += params.score_w.transpose() * d_scores;
  }

  // Decoder.
  const MatX<Scalar> d_up2_raw = crop_or_extend_backward(d_dec, tr.up2_raw.cols());
  MatX<Scalar> d_act1 = MatX<Scalar>::Zero(tr.act1.rows(), tr.act1.cols());
  deconv_backward(params.up2, tr.act1, d_up2_raw, grads.up2, &d_act1);
  const MatX<Scalar> d_skip_sum = relu_backward(tr.skip_sum, d_act1);
  const MatX<Scalar> d_up1_raw = crop_or_extend_backward(d_skip_sum, tr.up1_raw.cols());
  MatX<Scalar> d_bottom = MatX<Scalar>::Zero(tr.blocks.back().pool_out.rows(), tr.blocks.back().pool_out.cols());
  deconv_backward(params.up1, tr.blocks.back().pool_out, d_up1_raw, grads.up1, &d_bottom);

  // Encoder, with the skip gradient injected at the mid block (or dropped at
  // the input when the skip source is the input itself).
  std::vector<MatX<Scalar>> d_pool(tr.blocks.size());
  for (std::size_t i = 0; i < tr.blocks.size(); ++i) {
    d_pool[i] = MatX<Scalar>::Zero(tr.blocks[i].pool_out.rows(), tr.blocks[i].pool_out.cols());
  }
  d_pool.back() += d_bottom;
  const int mid = skip_block_index(cfg);
  if (mid > 0) d_pool[mid - 1] += d_skip_sum;
  detail::encoder_backward(params.encoder, tr.blocks, d_pool, grads.encoder, false);
  return grads;
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

template <class Scalar>
struct DiscriminatorTrace {
  MatX<Scalar> input;  // D x k
  std::vector<BlockCache<Scalar>> blocks;
  VecX<Scalar> pooled;
  Scalar logit = Scalar(0);
};

// FCSN encoder over the summary, temporal average pooling, affine score.
// The returned trace carries the pre-sigmoid logit; sigmoid(logit) is the
// realism probability.
template <class Scalar, class Derived>
DiscriminatorTrace<Scalar> discriminator_forward_traced(const DiscriminatorParams<Scalar>& params,
                                                        const NetworkConfig& cfg,
                                                        const Eigen::MatrixBase<Derived>& summary_rows) {
  cfg.validate();
  const int k = static_cast<int>(summary_rows.rows());
  if (k < 1) throw ValidationError("discriminator_forward: empty summary");
  if (params.encoder.empty() || params.encoder[0].w[0].cols() != summary_rows.cols()) {
    throw ValidationError("discriminator_forward: input dimension mismatch");
  }
  if (k < cfg.min_summary_frames()) {
    throw ValidationError("discriminator_forward: summary has k=" + std::to_string(k) +
                          " frames, below the encoder's minimum temporal extent 2^depth=" +
                          std::to_string(cfg.min_summary_frames()) + "; reduce network.disc_depth");
  }
  DiscriminatorTrace<Scalar> tr;
  tr.input = summary_rows.transpose().template cast<Scalar>();
  const MatX<Scalar> encoded = detail::run_encoder(params.encoder, tr.input, tr.blocks);
  tr.pooled = encoded.rowwise().mean();
  tr.logit = params.fc_w.dot(tr.pooled) + params.fc_b;
  return tr;
}

// Realism score sigma(FC(mean_t(FCSN_enc(s)))) in the open interval (0, 1).
template <class Scalar>
double discriminator_forward(const DiscriminatorParams<Scalar>& params, const NetworkConfig& cfg,
                             const SummaryFeatureSequence<Scalar>& s) {
  s.validate();
  const auto tr = discriminator_forward_traced(params, cfg, s.features);
  double p = sigmoid<double>(static_cast<double>(tr.logit));
  p = std::min(std::max(p, std::numeric_limits<double>::min()), 1.0 - std::numeric_limits<double>::epsilon() / 2);
  return p;
}

template <class Scalar>
struct DiscriminatorBackward {
  DiscriminatorParams<Scalar> grads;
  MatX<Scalar> d_input;  // k x D, gradient at the summary feature rows
};

template <class Scalar>
DiscriminatorBackward<Scalar> discriminator_backward(const DiscriminatorParams<Scalar>& params,
                                                     const NetworkConfig& cfg, const DiscriminatorTrace<Scalar>& tr,
                                                     Scalar d_logit, bool want_input_grad) {
  DiscriminatorBackward<Scalar> out;
  out.grads = make_discriminator_params<Scalar>(cfg);
  out.grads.fc_w += d_logit * tr.pooled;
  out.grads.fc_b += d_logit;
  const auto& final_block = tr.blocks.back();
  const Eigen::Index steps = final_block.pool_out.cols();
  const VecX<Scalar> d_pooled = d_logit * params.fc_w;
  std::vector<MatX<Scalar>> d_pool(tr.blocks.size());
  for (std::size_t i = 0; i < tr.blocks.size(); ++i) {
    d_pool[i] = MatX<Scalar>::Zero(tr.blocks[i].pool_out.rows(), tr.blocks[i].pool_out.cols());
  }
  d_pool.back() += (d_pooled / static_cast<Scalar>(steps)).replicate(1, steps);
  const MatX<Scalar> d_in =
      detail::encoder_backward(params.encoder, tr.blocks, d_pool, out.grads.encoder, want_input_grad);
  if (want_input_grad) out.d_input = d_in.transpose();
  return out;
}

}  // namespace uvsn
