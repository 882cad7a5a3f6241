#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "uvsn/errors.hpp"

namespace uvsn {

template <class Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Binary per-frame mask. Values are 0/1 bytes.
using Mask = std::vector<std::uint8_t>;

inline int popcount(const Mask& m) {
  int n = 0;
  for (auto b : m) n += (b != 0);
  return n;
}

// A video as a T x D matrix of per-frame feature activations (frames are
// rows). Storage scalar is float in production; tests instantiate double.
template <class Scalar>
struct FrameFeatureSequence {
  std::string video_id;
  MatX<Scalar> features;  // T x D

  Eigen::Index frames() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  void validate() const {
    if (features.rows() < 1 || features.cols() < 1) {
      throw ValidationError("feature sequence '" + video_id + "': T >= 1 and D >= 1 required, got " +
                            std::to_string(features.rows()) + "x" + std::to_string(features.cols()));
    }
    if (!features.allFinite()) {
      throw ValidationError("feature sequence '" + video_id + "': non-finite feature value");
    }
  }
};

// Ground-truth key-frame indicator for one video (one 0/1 value per frame).
struct KeyframeAnnotation {
  std::string video_id;
  Mask mask;

  void validate() const {
    if (mask.empty()) throw ValidationError("annotation '" + video_id + "': empty mask");
    bool any = false;
    for (auto b : mask) {
      if (b > 1) throw ValidationError("annotation '" + video_id + "': mask values must be 0/1");
      any = any || (b == 1);
    }
    if (!any) throw ValidationError("annotation '" + video_id + "': mask has no key frame");
  }
};

// One keyshot mask per human annotator (U x T).
struct UserSummaries {
  std::string video_id;
  std::vector<Mask> masks;

  int users() const { return static_cast<int>(masks.size()); }

  void validate() const {
    if (masks.empty()) throw ValidationError("user summaries '" + video_id + "': U >= 1 required");
    const std::size_t t = masks.front().size();
    for (std::size_t u = 0; u < masks.size(); ++u) {
      const Mask& m = masks[u];
      if (m.size() != t) throw ValidationError("user summaries '" + video_id + "': ragged rows");
      bool any = false;
      for (auto b : m) {
        if (b > 1) throw ValidationError("user summaries '" + video_id + "': mask values must be 0/1");
        any = any || (b == 1);
      }
      if (!any) {
        throw ValidationError("user summaries '" + video_id + "': user " + std::to_string(u) + " mask is empty");
      }
    }
  }
};

// k selected frame indices plus their k x D feature rows. For generated
// summaries the rows are the reconstruction output merged with the input
// rows at the same indices; for real summaries they are the raw rows of the
// ground-truth key frames.
template <class Scalar>
struct SummaryFeatureSequence {
  std::string video_id;
  std::vector<int> selected_indices;  // strictly increasing, in [0, T)
  MatX<Scalar> features;              // k x D

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  void validate() const {
    const auto k = static_cast<Eigen::Index>(selected_indices.size());
    if (k < 1) throw ValidationError("summary '" + video_id + "': k >= 1 required");
    if (features.rows() != k) {
      throw ValidationError("summary '" + video_id + "': index count " + std::to_string(k) +
                            " != feature rows " + std::to_string(features.rows()));
    }
    for (std::size_t i = 0; i < selected_indices.size(); ++i) {
      if (selected_indices[i] < 0) throw ValidationError("summary '" + video_id + "': negative frame index");
      if (i > 0 && selected_indices[i] <= selected_indices[i - 1]) {
        throw ValidationError("summary '" + video_id + "': indices must be strictly increasing");
      }
    }
    if (!features.allFinite()) throw ValidationError("summary '" + video_id + "': non-finite feature value");
  }

  // Checks indices against the source video length.
  void validate_against(Eigen::Index t) const {
    validate();
    if (!selected_indices.empty() && selected_indices.back() >= t) {
      throw ValidationError("summary '" + video_id + "': frame index " +
                            std::to_string(selected_indices.back()) + " out of range for T=" + std::to_string(t));
    }
  }
};

// Annotation for a raw video that is also in the paired subset V_p. The
// index points into UnpairedDataset::raw_videos, which keeps V_p subset of V
// structural.
struct PairedAnnotation {
  int raw_index = -1;
  KeyframeAnnotation annotation;
};

// Disjoint raw-video and real-summary sets, plus the optional paired subset.
template <class Scalar>
struct UnpairedDataset {
  std::vector<FrameFeatureSequence<Scalar>> raw_videos;        // V, size M
  std::vector<SummaryFeatureSequence<Scalar>> real_summaries;  // S, size N
  std::vector<PairedAnnotation> paired_subset;                 // V_p

  void validate() const {
    for (const auto& v : raw_videos) v.validate();
    for (const auto& s : real_summaries) s.validate();
    for (const auto& v : raw_videos) {
      for (const auto& s : real_summaries) {
        if (v.video_id == s.video_id) {
          throw ValidationError("dataset is not unpaired: video_id '" + v.video_id +
                                "' appears in both raw videos and real summaries");
        }
      }
    }
    for (const auto& p : paired_subset) {
      if (p.raw_index < 0 || p.raw_index >= static_cast<int>(raw_videos.size())) {
        throw ValidationError("paired annotation points outside raw video set");
      }
      const auto& v = raw_videos[p.raw_index];
      if (p.annotation.video_id != v.video_id) {
        throw ValidationError("paired annotation id '" + p.annotation.video_id + "' != raw video id '" +
                              v.video_id + "'");
      }
      p.annotation.validate();
      if (static_cast<Eigen::Index>(p.annotation.mask.size()) != v.frames()) {
        throw ValidationError("paired annotation '" + p.annotation.video_id + "': mask length " +
                              std::to_string(p.annotation.mask.size()) + " != T=" + std::to_string(v.frames()));
      }
    }
  }
};

// Binary per-frame mask of a final keyshot summary. May be empty (all
// zeros) when nothing fits the budget.
struct ShotSummary {
  Mask mask;

  void validate() const {
    for (auto b : mask) {
      if (b > 1) throw ValidationError("shot summary: mask values must be 0/1");
    }
  }
};

// Rows of `seq` where the ground-truth mask is 1, as a real summary.
template <class Scalar>
SummaryFeatureSequence<Scalar> build_real_summary(const FrameFeatureSequence<Scalar>& seq,
                                                  const KeyframeAnnotation& ann) {
  seq.validate();
  ann.validate();
  if (static_cast<Eigen::Index>(ann.mask.size()) != seq.frames()) {
    throw ValidationError("build_real_summary '" + seq.video_id + "': mask length " +
                          std::to_string(ann.mask.size()) + " != T=" + std::to_string(seq.frames()));
  }
  SummaryFeatureSequence<Scalar> out;
  out.video_id = seq.video_id;
  for (std::size_t t = 0; t < ann.mask.size(); ++t) {
    if (ann.mask[t]) out.selected_indices.push_back(static_cast<int>(t));
  }
  const auto k = static_cast<Eigen::Index>(out.selected_indices.size());
  out.features.resize(k, seq.dim());
  for (Eigen::Index i = 0; i < k; ++i) {
    out.features.row(i) = seq.features.row(out.selected_indices[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace uvsn
