#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "uvsn/errors.hpp"
#include "uvsn/tempseg.hpp"
#include "uvsn/types.hpp"

namespace uvsn {

struct KtsSettings {
  int max_segments = 20;
  double penalty_coeff = 1.0;
  bool normalized = true;
};

enum class Aggregation { mean, max };

inline const char* to_string(Aggregation a) { return a == Aggregation::mean ? "mean" : "max"; }

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "mean") return Aggregation::mean;
  if (s == "max") return Aggregation::max;
  throw ConfigError("unknown aggregation '" + s + "' (expected mean or max)");
}

struct EvalConfig {
  double budget_ratio = 0.15;  // summary length cap as a fraction of T
  Aggregation user_aggregation = Aggregation::mean;
  KtsSettings kts;

  void validate() const {
    if (!(budget_ratio > 0.0 && budget_ratio <= 1.0)) {
      throw ValidationError("budget_ratio must be in (0, 1], got " + std::to_string(budget_ratio));
    }
    if (kts.max_segments < 1) throw ValidationError("kts.max_segments must be >= 1");
    if (kts.penalty_coeff < 0) throw ValidationError("kts.penalty_coeff must be >= 0");
  }
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
};

struct VideoScore {
  std::string video_id;
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
};

// Exact 0/1 knapsack: maximize total value subject to total weight <=
// capacity. Ties are broken toward smaller total weight, then toward the
// lexicographically smallest index set, so zero-value items never enter the
// solution.
inline std::vector<int> knapsack_select(const std::vector<int>& weights, const std::vector<double>& values,
                                        int capacity) {
  if (weights.size() != values.size()) {
    throw ValidationError("knapsack_select: weight/value lists differ in length");
  }
  if (capacity < 0) throw ValidationError("knapsack_select: negative capacity");
  const int n = static_cast<int>(weights.size());
  for (int i = 0; i < n; ++i) {
    if (weights[i] <= 0) throw ValidationError("knapsack_select: weights must be positive integers");
    if (values[i] < 0) throw ValidationError("knapsack_select: values must be nonnegative");
  }

  struct Cell {
    double value = 0.0;
    long weight = 0;
  };
  // best[i][c] describes the best selection among items i..n-1 under
  // capacity c. The take/skip preference below makes the forward walk emit
  // the lexicographically smallest optimal index set.
  std::vector<Cell> best(static_cast<std::size_t>(n + 1) * (capacity + 1));
  auto at = [&](int i, int c) -> Cell& { return best[static_cast<std::size_t>(i) * (capacity + 1) + c]; };

  for (int i = n - 1; i >= 0; --i) {
    for (int c = 0; c <= capacity; ++c) {
      Cell pick = at(i + 1, c);  // skip item i
      if (weights[i] <= c) {
        const Cell& rest = at(i + 1, c - weights[i]);
        const Cell take{values[i] + rest.value, weights[i] + rest.weight};
        const bool take_wins =
            take.value > pick.value ||
            (take.value == pick.value && (take.weight < pick.weight || take.weight == pick.weight));
        if (take_wins) pick = take;
      }
      at(i, c) = pick;
    }
  }

  std::vector<int> selected;
  int c = capacity;
  Cell remaining = at(0, capacity);
  for (int i = 0; i < n && remaining.value > 0; ++i) {
    if (weights[i] > c) continue;
    const Cell& rest = at(i + 1, c - weights[i]);
    if (values[i] + rest.value == remaining.value && weights[i] + rest.weight == remaining.weight) {
      selected.push_back(i);
      c -= weights[i];
      remaining = rest;
    }
  }
  return selected;
}

// Key frames -> keyshots: each segment is ranked by its key-frame density
// (#key frames / length) and the summary is the exact-knapsack selection of
// segments under a floor(budget_ratio * T) frame capacity.
inline ShotSummary keyframes_to_keyshots(const Mask& keyframes, const SegmentList& segments,
                                         const EvalConfig& config) {
  config.validate();
  const int t = static_cast<int>(keyframes.size());
  segments.validate(t);
  const int m = segments.num_segments();
  std::vector<int> weights(m);
  std::vector<double> values(m);
  for (int i = 0; i < m; ++i) {
    int count = 0;
    for (int f = segments.segment_begin(i); f < segments.segment_end(i); ++f) count += (keyframes[f] != 0);
    weights[i] = segments.segment_length(i);
    values[i] = static_cast<double>(count) / weights[i];
  }
  const int capacity = static_cast<int>(std::floor(config.budget_ratio * t));
  const auto chosen = knapsack_select(weights, values, capacity);
  ShotSummary out;
  out.mask.assign(keyframes.size(), 0);
  for (int i : chosen) {
    for (int f = segments.segment_begin(i); f < segments.segment_end(i); ++f) out.mask[f] = 1;
  }
  return out;
}

// Frame-count precision/recall/F between a predicted mask X and a ground
// truth mask Y. Conventions: |X| = 0 gives P = 0, |Y| = 0 gives R = 0,
// P + R = 0 gives F = 0.
inline Prf precision_recall_f(const Mask& x, const Mask& y) {
  if (x.size() != y.size()) {
    throw ValidationError("precision_recall_f: mask lengths differ (" + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()) + ")");
  }
  int overlap = 0, nx = 0, ny = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool xi = x[i] != 0, yi = y[i] != 0;
    overlap += (xi && yi);
    nx += xi;
    ny += yi;
  }
  Prf out;
  out.precision = nx > 0 ? static_cast<double>(overlap) / nx : 0.0;
  out.recall = ny > 0 ? static_cast<double>(overlap) / ny : 0.0;
  out.f_score = (out.precision + out.recall) > 0 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                                                 : 0.0;
  return out;
}

// Scores a prediction against every user summary and aggregates P, R and F
// with the same rule (mean or max over users).
inline VideoScore evaluate_video(const ShotSummary& pred, const UserSummaries& users, Aggregation aggregation) {
  users.validate();
  VideoScore score;
  score.video_id = users.video_id;
  double p = 0.0, r = 0.0, f = 0.0;
  bool first = true;
  for (const Mask& y : users.masks) {
    const Prf prf = precision_recall_f(pred.mask, y);
    if (aggregation == Aggregation::mean) {
      p += prf.precision;
      r += prf.recall;
      f += prf.f_score;
    } else {
      if (first) {
        p = prf.precision;
        r = prf.recall;
        f = prf.f_score;
      } else {
        p = std::max(p, prf.precision);
        r = std::max(r, prf.recall);
        f = std::max(f, prf.f_score);
      }
    }
    first = false;
  }
  const double u = static_cast<double>(users.masks.size());
  if (aggregation == Aggregation::mean) {
    p /= u;
    r /= u;
    f /= u;
  }
  score.precision = p;
  score.recall = r;
  score.f_score = f;
  return score;
}

}  // namespace uvsn
