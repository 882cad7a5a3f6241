#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "uvsn/errors.hpp"
#include "uvsn/types.hpp"

namespace uvsn {

// Temporal segmentation of [0, T) into half-open segments
// [b_i, b_{i+1}), with 0 = b_0 < b_1 < ... < b_m = T.
struct SegmentList {
  std::vector<int> boundaries;

  int num_segments() const { return static_cast<int>(boundaries.size()) - 1; }
  int segment_begin(int i) const { return boundaries[i]; }
  int segment_end(int i) const { return boundaries[i + 1]; }
  int segment_length(int i) const { return boundaries[i + 1] - boundaries[i]; }

  void validate(int t) const {
    if (boundaries.size() < 2 || boundaries.front() != 0 || boundaries.back() != t) {
      throw ValidationError("segment list must start at 0 and end at T=" + std::to_string(t));
    }
    for (std::size_t i = 1; i < boundaries.size(); ++i) {
      if (boundaries[i] <= boundaries[i - 1]) throw ValidationError("segment boundaries must strictly increase");
    }
  }
};

// Linear-kernel Gram matrix on the frame rows; rows are L2-normalized by
// default so the kernel is cosine similarity. Computed in double regardless
// of the storage scalar.
template <class Derived>
Eigen::MatrixXd gram_matrix_rows(const Eigen::MatrixBase<Derived>& rows, bool normalized = true) {
  Eigen::MatrixXd x = rows.template cast<double>();
  if (normalized) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double n = x.row(i).norm();
      if (n > 0) x.row(i) /= n;
    }
  }
  return x * x.transpose();
}

template <class Scalar>
Eigen::MatrixXd gram_matrix(const FrameFeatureSequence<Scalar>& v, bool normalized = true) {
  v.validate();
  return gram_matrix_rows(v.features, normalized);
}

// Within-segment kernel scatter, O(1) per query after O(T^2) prefix sums:
//   cost(a, b) = sum_{i in [a,b)} K[i][i] - (1/(b-a)) sum_{i,j in [a,b)} K[i][j]
class SegmentCostTable {
 public:
  explicit SegmentCostTable(const Eigen::MatrixXd& gram) {
    const Eigen::Index t = gram.rows();
    diag_prefix_.resize(t + 1);
    diag_prefix_[0] = 0.0;
    for (Eigen::Index i = 0; i < t; ++i) diag_prefix_[i + 1] = diag_prefix_[i] + gram(i, i);
    block_prefix_ = Eigen::MatrixXd::Zero(t + 1, t + 1);
    for (Eigen::Index i = 0; i < t; ++i) {
      for (Eigen::Index j = 0; j < t; ++j) {
        block_prefix_(i + 1, j + 1) = gram(i, j) + block_prefix_(i, j + 1) + block_prefix_(i + 1, j) - block_prefix_(i, j);
      }
    }
  }

  int size() const { return static_cast<int>(diag_prefix_.size()) - 1; }

  double cost(int a, int b) const {
    if (a < 0 || b > size() || a >= b) {
      throw ValidationError("segment_cost: need 0 <= a < b <= T, got a=" + std::to_string(a) +
                            " b=" + std::to_string(b));
    }
    const double diag = diag_prefix_[b] - diag_prefix_[a];
    const double block = block_prefix_(b, b) - block_prefix_(a, b) - block_prefix_(b, a) + block_prefix_(a, a);
    return diag - block / static_cast<double>(b - a);
  }

 private:
  std::vector<double> diag_prefix_;
  Eigen::MatrixXd block_prefix_;
};

template <class Scalar>
double segment_cost(const FrameFeatureSequence<Scalar>& v, int a, int b, bool normalized = true) {
  return SegmentCostTable(gram_matrix(v, normalized)).cost(a, b);
}

namespace detail {

struct KtsDp {
  // loss(m, t): optimal cost of splitting [0, t) into exactly m segments.
  // parent(m, t): the split point s achieving it (earliest on ties).
  Eigen::MatrixXd loss;
  Eigen::MatrixXi parent;
};

inline KtsDp kts_dynamic_program(const SegmentCostTable& costs, int max_segments) {
  const int t_total = costs.size();
  const double inf = std::numeric_limits<double>::infinity();
  KtsDp dp;
  dp.loss = Eigen::MatrixXd::Constant(max_segments + 1, t_total + 1, inf);
  dp.parent = Eigen::MatrixXi::Constant(max_segments + 1, t_total + 1, -1);
  for (int t = 1; t <= t_total; ++t) {
    dp.loss(1, t) = costs.cost(0, t);
    dp.parent(1, t) = 0;
  }
  for (int m = 2; m <= max_segments; ++m) {
    for (int t = m; t <= t_total; ++t) {
      double best = inf;
      int best_s = -1;
      for (int s = m - 1; s < t; ++s) {
        const double c = dp.loss(m - 1, s) + costs.cost(s, t);
        if (c < best) {  // strict: ties keep the earlier split point
          best = c;
          best_s = s;
        }
      }
      dp.loss(m, t) = best;
      dp.parent(m, t) = best_s;
    }
  }
  return dp;
}

inline std::vector<int> kts_backtrack(const KtsDp& dp, int m, int t_total) {
  std::vector<int> bounds(m + 1);
  bounds[m] = t_total;
  int t = t_total;
  for (int i = m; i >= 1; --i) {
    t = dp.parent(i, t);
    bounds[i - 1] = t;
  }
  return bounds;
}

}  // namespace detail

// Exact optimal cost of an m-segmentation, for each m = 1..max_segments.
inline std::vector<double> kts_costs(const SegmentCostTable& costs, int max_segments) {
  const auto dp = detail::kts_dynamic_program(costs, max_segments);
  std::vector<double> out(max_segments);
  for (int m = 1; m <= max_segments; ++m) out[m - 1] = dp.loss(m, costs.size());
  return out;
}

// Kernel temporal segmentation. Chooses the segment count m* minimizing
//   L_m(T) + penalty_coeff * m * (log(T/m) + 1)
// over m = 1..max_segments (smallest m on ties), then returns the optimal
// m*-segmentation. With penalty_coeff = 0 the objective is non-increasing in
// m, so m* = max_segments on noisy data: setting max_segments = m with zero
// penalty requests an exact m-segmentation.
inline SegmentList kts_from_gram(const Eigen::MatrixXd& gram, int max_segments, double penalty_coeff) {
  const int t_total = static_cast<int>(gram.rows());
  if (max_segments < 1 || max_segments > t_total) {
    throw ValidationError("kts: need 1 <= max_segments <= T, got max_segments=" + std::to_string(max_segments) +
                          " T=" + std::to_string(t_total));
  }
  if (penalty_coeff < 0) throw ValidationError("kts: penalty_coeff must be nonnegative");
  const SegmentCostTable costs(gram);
  const auto dp = detail::kts_dynamic_program(costs, max_segments);
  int best_m = 1;
  double best = std::numeric_limits<double>::infinity();
  for (int m = 1; m <= max_segments; ++m) {
    const double md = static_cast<double>(m);
    const double penalized = dp.loss(m, t_total) + penalty_coeff * md * (std::log(t_total / md) + 1.0);
    if (penalized < best) {
      best = penalized;
      best_m = m;
    }
  }
  SegmentList out{detail::kts_backtrack(dp, best_m, t_total)};
  out.validate(t_total);
  return out;
}

template <class Scalar>
SegmentList kts(const FrameFeatureSequence<Scalar>& v, int max_segments, double penalty_coeff,
                bool normalized = true) {
  return kts_from_gram(gram_matrix(v, normalized), max_segments, penalty_coeff);
}

}  // namespace uvsn
