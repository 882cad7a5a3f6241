#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"
#include "uvsn/config.hpp"
#include "uvsn/errors.hpp"
#include "uvsn/evalkit.hpp"
#include "uvsn/io.hpp"
#include "uvsn/network.hpp"
#include "uvsn/tempseg.hpp"
#include "uvsn/trainer.hpp"

namespace uvsn {

inline void eval_config_to_map(const EvalConfig& cfg, ConfigMap& out) {
  out.set("eval.budget_ratio", std::to_string(cfg.budget_ratio));
  out.set("eval.user_aggregation", to_string(cfg.user_aggregation));
  out.set("eval.kts_max_segments", std::to_string(cfg.kts.max_segments));
  out.set("eval.kts_penalty_coeff", std::to_string(cfg.kts.penalty_coeff));
  out.set("eval.kts_normalized", cfg.kts.normalized ? "true" : "false");
}

inline EvalConfig eval_config_from_map(const ConfigMap& cfg) {
  EvalConfig out;
  out.budget_ratio = cfg.get_double("eval.budget_ratio", out.budget_ratio);
  out.user_aggregation = parse_aggregation(cfg.get_string("eval.user_aggregation", to_string(out.user_aggregation)));
  out.kts.max_segments = static_cast<int>(cfg.get_int("eval.kts_max_segments", out.kts.max_segments));
  out.kts.penalty_coeff = cfg.get_double("eval.kts_penalty_coeff", out.kts.penalty_coeff);
  out.kts.normalized = cfg.get_bool("eval.kts_normalized", out.kts.normalized);
  out.validate();
  return out;
}

// Full inference path for one video: score frames, pick the top-k key
// frames, segment with KTS, and budget the segments with the knapsack.
struct VideoSummary {
  std::vector<int> keyframe_indices;
  SegmentList segments;
  ShotSummary shots;
};

template <class Scalar>
VideoSummary summarize_video(const SelectorParams<Scalar>& sel, const NetworkConfig& netcfg,
                             const FrameFeatureSequence<Scalar>& video, const EvalConfig& evalcfg) {
  evalcfg.validate();
  const int t = static_cast<int>(video.frames());
  const int k = std::min(netcfg.selection_count(t), t);
  const auto out = selector_forward(sel, netcfg, video, k);

  VideoSummary result;
  result.keyframe_indices = out.summary.selected_indices;
  Mask keyframes(t, 0);
  for (int i : result.keyframe_indices) keyframes[i] = 1;
  result.segments = kts(video, std::min(evalcfg.kts.max_segments, t), evalcfg.kts.penalty_coeff,
                        evalcfg.kts.normalized);
  result.shots = keyframes_to_keyshots(keyframes, result.segments, evalcfg);
  return result;
}

struct EvalReport {
  std::vector<VideoScore> per_video;
  double mean_precision = 0.0;  // percentages
  double mean_recall = 0.0;
  double mean_f = 0.0;
};

template <class Scalar>
EvalReport evaluate_dataset(const SelectorParams<Scalar>& sel, const NetworkConfig& netcfg,
                            const std::vector<TestVideo<Scalar>>& test_videos, const EvalConfig& evalcfg) {
  if (test_videos.empty()) throw ValidationError("evaluate: no test videos");
  EvalReport report;
  for (const auto& tv : test_videos) {
    if (tv.video.dim() != netcfg.feature_dim) {
      throw ValidationError("evaluate: video '" + tv.video.video_id + "' has D=" + std::to_string(tv.video.dim()) +
                            " but the checkpoint expects D=" + std::to_string(netcfg.feature_dim));
    }
    const auto summary = summarize_video(sel, netcfg, tv.video, evalcfg);
    VideoScore score = evaluate_video(summary.shots, tv.users, evalcfg.user_aggregation);
    score.precision *= 100.0;
    score.recall *= 100.0;
    score.f_score *= 100.0;
    report.per_video.push_back(std::move(score));
  }
  const double n = static_cast<double>(report.per_video.size());
  for (const auto& s : report.per_video) {
    report.mean_precision += s.precision / n;
    report.mean_recall += s.recall / n;
    report.mean_f += s.f_score / n;
  }
  return report;
}

// Checkpoint + test manifest entry point (the CLI path).
inline EvalReport evaluate_dataset(const std::string& checkpoint_path, const std::string& test_manifest,
                                   const EvalConfig& evalcfg) {
  const auto model = load_model_checkpoint(checkpoint_path);
  const auto test_videos = load_test_videos<float>(test_manifest);
  return evaluate_dataset(model.selector, model.network, test_videos, evalcfg);
}

inline double round4(double x) { return std::round(x * 1e4) / 1e4; }

// Report document: config echo, per-video P/R/F and corpus means, all as
// percentages with 4 decimal places.
inline nlohmann::json report_to_json(const EvalReport& report, const ConfigMap& resolved_config) {
  nlohmann::json j;
  j["config"] = nlohmann::json::object();
  for (const auto& [k, v] : resolved_config.values()) j["config"][k] = v;
  j["per_video"] = nlohmann::json::array();
  for (const auto& s : report.per_video) {
    j["per_video"].push_back({{"video_id", s.video_id},
                              {"P", round4(s.precision)},
                              {"R", round4(s.recall)},
                              {"F", round4(s.f_score)}});
  }
  j["mean_P"] = round4(report.mean_precision);
  j["mean_R"] = round4(report.mean_recall);
  j["mean_F"] = round4(report.mean_f);
  return j;
}

}  // namespace uvsn
