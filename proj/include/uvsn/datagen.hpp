#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "uvsn/config.hpp"
#include "uvsn/errors.hpp"
#include "uvsn/io.hpp"
#include "uvsn/rng.hpp"
#include "uvsn/types.hpp"

namespace uvsn {

// ---------------------------------------------------------------------------
// Split construction
// ---------------------------------------------------------------------------

enum class SplitMode { standard, transfer };

inline const char* to_string(SplitMode m) { return m == SplitMode::standard ? "standard" : "transfer"; }

inline SplitMode parse_split_mode(const std::string& s) {
  if (s == "standard") return SplitMode::standard;
  if (s == "transfer") return SplitMode::transfer;
  throw ConfigError("unknown split mode '" + s + "'");
}

struct SplitSpec {
  std::string target;
  SplitMode mode = SplitMode::standard;
  double test_fraction = 0.2;
  double unpaired_fraction = 0.5;  // share of the pool that keeps its raw video
  double psup_fraction = 0.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (target.empty()) throw ConfigError("split: target dataset name required");
    for (double f : {test_fraction, unpaired_fraction, psup_fraction}) {
      if (f < 0.0 || f > 1.0) throw ValidationError("split: fractions must lie in [0, 1]");
    }
  }

  void to_config(ConfigMap& cfg) const {
    cfg.set("split.target", target);
    cfg.set("split.mode", to_string(mode));
    cfg.set("split.test_fraction", std::to_string(test_fraction));
    cfg.set("split.unpaired_fraction", std::to_string(unpaired_fraction));
    cfg.set("split.psup_fraction", std::to_string(psup_fraction));
    cfg.set("split.seed", std::to_string(seed));
  }

  static SplitSpec from_config(const ConfigMap& cfg) {
    SplitSpec out;
    out.target = cfg.get_string("split.target", out.target);
    out.mode = parse_split_mode(cfg.get_string("split.mode", to_string(out.mode)));
    out.test_fraction = cfg.get_double("split.test_fraction", out.test_fraction);
    out.unpaired_fraction = cfg.get_double("split.unpaired_fraction", out.unpaired_fraction);
    out.psup_fraction = cfg.get_double("split.psup_fraction", out.psup_fraction);
    out.seed = cfg.get_uint("split.seed", out.seed);
    return out;
  }
};

struct NamedDataset {
  std::string name;
  std::string manifest_path;
  std::vector<ManifestEntry> entries;
};

inline NamedDataset load_named_dataset(const std::string& name, const std::string& manifest_path) {
  NamedDataset ds{name, manifest_path, read_manifest(manifest_path)};
  if (ds.entries.empty()) throw ValidationError("dataset '" + name + "': empty manifest " + manifest_path);
  return ds;
}

// Test entries need the multi-user keyshot file. Datasets ship a key-frame
// file per video ("<id>.kf.uvsa") with the user summaries in a sibling
// "<id>.users.uvsa"; a dataset whose annotation file does not follow the
// sibling convention uses the same file for both purposes.
inline std::string users_annotation_path(const std::string& keyframe_path) {
  const std::string suffix = ".kf.uvsa";
  if (keyframe_path.size() > suffix.size() &&
      keyframe_path.compare(keyframe_path.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return keyframe_path.substr(0, keyframe_path.size() - suffix.size()) + ".users.uvsa";
  }
  return keyframe_path;
}

struct SplitResult {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
  int raw_count = 0;
  int summary_count = 0;
  int paired_count = 0;
  int test_count = 0;
};

// Marks the first ceil(fraction * M) raw videos, in manifest order, as
// paired. Their annotation paths must exist.
inline int mark_partial_supervision(std::vector<ManifestEntry>& entries, double fraction) {
  if (fraction < 0.0 || fraction > 1.0) throw ValidationError("psup_fraction must lie in [0, 1]");
  int m = 0;
  for (const auto& e : entries) m += (e.role == Role::raw);
  const int quota = static_cast<int>(std::ceil(fraction * m));
  int marked = 0;
  for (auto& e : entries) {
    if (marked >= quota) break;
    if (e.role != Role::raw) continue;
    if (e.annotation_path.empty() || e.annotation_path == "-" || !std::filesystem::exists(e.annotation_path)) {
      throw ValidationError("partial supervision: missing annotation file for video '" + e.video_id + "'");
    }
    e.role = Role::paired;
    ++marked;
  }
  return marked;
}

// Builds an unpaired training manifest and a test manifest.
//
// standard: a seeded test_fraction sample of the target dataset is held out;
// the remaining target videos plus all other datasets form the pool, which
// is split into raw-only and summary-only roles. transfer: the whole target
// is the test set and the pool is every other dataset.
//
// Raw entries keep their annotation paths (the roles express unpairedness;
// the trainer ignores annotations of raw videos) so partial supervision can
// later restore them.
inline SplitResult make_unpaired_split(const std::vector<NamedDataset>& datasets, const SplitSpec& spec) {
  spec.validate();
  const NamedDataset* target = nullptr;
  for (const auto& ds : datasets) {
    if (ds.name == spec.target) target = &ds;
  }
  if (target == nullptr) throw ConfigError("split: target dataset '" + spec.target + "' not among inputs");

  std::unordered_set<std::string> seen;
  for (const auto& ds : datasets) {
    for (const auto& e : ds.entries) {
      if (!seen.insert(e.video_id).second) {
        throw ValidationError("split: video_id '" + e.video_id + "' appears in more than one dataset");
      }
    }
  }

  // Resolve relative paths against each dataset's own manifest location.
  const auto resolved = [](const NamedDataset& ds, const ManifestEntry& e) {
    ManifestEntry out = e;
    out.feature_path = std::filesystem::absolute(resolve_path(ds.manifest_path, e.feature_path)).string();
    if (!e.annotation_path.empty() && e.annotation_path != "-") {
      out.annotation_path = std::filesystem::absolute(resolve_path(ds.manifest_path, e.annotation_path)).string();
    }
    return out;
  };

  Rng rng(spec.seed);
  SplitResult result;
  std::vector<ManifestEntry> pool;

  if (spec.mode == SplitMode::standard) {
    std::vector<int> order(target->entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    const int n_test = static_cast<int>(std::lround(spec.test_fraction * static_cast<double>(order.size())));
    std::vector<bool> is_test(order.size(), false);
    for (int i = 0; i < n_test; ++i) is_test[order[i]] = true;
    for (std::size_t i = 0; i < target->entries.size(); ++i) {
      if (is_test[i]) {
        result.test.push_back(resolved(*target, target->entries[i]));
      } else {
        pool.push_back(resolved(*target, target->entries[i]));
      }
    }
    for (const auto& ds : datasets) {
      if (ds.name == spec.target) continue;
      for (const auto& e : ds.entries) pool.push_back(resolved(ds, e));
    }
  } else {
    for (const auto& e : target->entries) result.test.push_back(resolved(*target, e));
    for (const auto& ds : datasets) {
      if (ds.name == spec.target) continue;
      for (const auto& e : ds.entries) pool.push_back(resolved(ds, e));
    }
  }
  if (pool.empty()) throw ValidationError("split: empty training pool");
  if (result.test.empty()) throw ValidationError("split: empty test set");

  rng.shuffle(pool);
  const int n_raw = static_cast<int>(std::ceil(spec.unpaired_fraction * static_cast<double>(pool.size())));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    ManifestEntry e = pool[i];
    if (static_cast<int>(i) < n_raw) {
      e.role = Role::raw;
    } else {
      e.role = Role::summary;
      if (e.annotation_path.empty() || e.annotation_path == "-") {
        throw ValidationError("split: summary-role video '" + e.video_id + "' has no key-frame annotation");
      }
    }
    result.train.push_back(std::move(e));
  }

  for (auto& e : result.test) {
    e.role = Role::test;
    if (e.annotation_path.empty() || e.annotation_path == "-") {
      throw ValidationError("split: test video '" + e.video_id + "' has no annotation");
    }
    e.annotation_path = users_annotation_path(e.annotation_path);
  }

  if (spec.psup_fraction > 0.0) {
    result.paired_count = mark_partial_supervision(result.train, spec.psup_fraction);
  }
  for (const auto& e : result.train) {
    result.raw_count += (e.role == Role::raw || e.role == Role::paired);
    result.summary_count += (e.role == Role::summary);
  }
  result.test_count = static_cast<int>(result.test.size());
  return result;
}

// ---------------------------------------------------------------------------
// Synthetic corpus generation
// ---------------------------------------------------------------------------

struct SynthOptions {
  int n_videos = 100;
  int t_min = 48, t_max = 96;
  int feature_dim = 16;
  int segments_min = 6, segments_max = 10;
  double important_fraction = 0.35;
  double noise_sigma = 0.05;
  int n_users = 3;
  std::uint64_t seed = 1;
  std::string id_prefix = "synth";

  // Planted structure. Important segments are short; their centroids lean
  // toward a corpus-level "interest" direction so importance is recognizable
  // across videos from features alone.
  int important_len_min = 2, important_len_max = 3;
  int background_len_min = 4;
  double budget_ratio = 0.15;
  double interest_strength = 0.5;  // 0 = importance carries no feature signature

  void validate() const {
    if (n_videos < 1 || feature_dim < 2 || n_users < 1) throw ValidationError("synth: bad sizes");
    if (t_min < 8 || t_max < t_min) throw ValidationError("synth: bad T range");
    if (segments_min < 1 || segments_max < segments_min) throw ValidationError("synth: bad segment range");
    if (important_fraction <= 0.0 || important_fraction > 1.0) {
      throw ValidationError("synth: important_fraction must be in (0, 1]");
    }
    if (noise_sigma < 0.0) throw ValidationError("synth: noise_sigma must be >= 0");
    if (important_len_min < 1 || important_len_max < important_len_min || background_len_min < 1) {
      throw ValidationError("synth: bad length bounds");
    }
    if (!(budget_ratio > 0.0 && budget_ratio <= 1.0)) throw ValidationError("synth: bad budget_ratio");
    if (interest_strength < 0.0 || interest_strength >= 0.72) {
      // cos(60 deg) = 0.5; two important centroids leaning this hard toward
      // the interest direction could not stay 60 degrees apart.
      throw ValidationError("synth: interest_strength must lie in [0, 0.72)");
    }
  }

  void to_config(ConfigMap& cfg) const {
    cfg.set("synth.n_videos", std::to_string(n_videos));
    cfg.set("synth.t_min", std::to_string(t_min));
    cfg.set("synth.t_max", std::to_string(t_max));
    cfg.set("synth.feature_dim", std::to_string(feature_dim));
    cfg.set("synth.segments_min", std::to_string(segments_min));
    cfg.set("synth.segments_max", std::to_string(segments_max));
    cfg.set("synth.important_fraction", std::to_string(important_fraction));
    cfg.set("synth.noise_sigma", std::to_string(noise_sigma));
    cfg.set("synth.n_users", std::to_string(n_users));
    cfg.set("synth.seed", std::to_string(seed));
    cfg.set("synth.id_prefix", id_prefix);
    cfg.set("synth.important_len_min", std::to_string(important_len_min));
    cfg.set("synth.important_len_max", std::to_string(important_len_max));
    cfg.set("synth.background_len_min", std::to_string(background_len_min));
    cfg.set("synth.budget_ratio", std::to_string(budget_ratio));
    cfg.set("synth.interest_strength", std::to_string(interest_strength));
  }

  static SynthOptions from_config(const ConfigMap& cfg) {
    SynthOptions out;
    out.n_videos = static_cast<int>(cfg.get_int("synth.n_videos", out.n_videos));
    out.t_min = static_cast<int>(cfg.get_int("synth.t_min", out.t_min));
    out.t_max = static_cast<int>(cfg.get_int("synth.t_max", out.t_max));
    out.feature_dim = static_cast<int>(cfg.get_int("synth.feature_dim", out.feature_dim));
    out.segments_min = static_cast<int>(cfg.get_int("synth.segments_min", out.segments_min));
    out.segments_max = static_cast<int>(cfg.get_int("synth.segments_max", out.segments_max));
    out.important_fraction = cfg.get_double("synth.important_fraction", out.important_fraction);
    out.noise_sigma = cfg.get_double("synth.noise_sigma", out.noise_sigma);
    out.n_users = static_cast<int>(cfg.get_int("synth.n_users", out.n_users));
    out.seed = cfg.get_uint("synth.seed", out.seed);
    out.id_prefix = cfg.get_string("synth.id_prefix", out.id_prefix);
    out.important_len_min = static_cast<int>(cfg.get_int("synth.important_len_min", out.important_len_min));
    out.important_len_max = static_cast<int>(cfg.get_int("synth.important_len_max", out.important_len_max));
    out.background_len_min = static_cast<int>(cfg.get_int("synth.background_len_min", out.background_len_min));
    out.budget_ratio = cfg.get_double("synth.budget_ratio", out.budget_ratio);
    out.interest_strength = cfg.get_double("synth.interest_strength", out.interest_strength);
    out.validate();
    return out;
  }
};

struct SynthVideoTruth {
  std::vector<int> boundaries;
  std::vector<int> important_segments;
  std::vector<int> medoid_frames;
};

namespace detail {

inline Eigen::VectorXd random_unit(Rng& rng, int d) {
  Eigen::VectorXd v(d);
  double n = 0;
  do {
    for (int i = 0; i < d; ++i) v(i) = rng.normal();
    n = v.norm();
  } while (n < 1e-9);
  return v / n;
}

// `parts` positive lengths >= min_len summing to total.
inline std::vector<int> random_partition(Rng& rng, int total, int parts, int min_len) {
  if (total < parts * min_len) throw ValidationError("partition: total too small");
  const int free_mass = total - parts * min_len;
  std::vector<int> cuts(parts + 1, 0);
  cuts[parts] = free_mass;
  for (int i = 1; i < parts; ++i) cuts[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(free_mass) + 1));
  std::sort(cuts.begin() + 1, cuts.begin() + parts);
  std::vector<int> lens(parts);
  for (int i = 0; i < parts; ++i) lens[i] = min_len + cuts[i + 1] - cuts[i];
  return lens;
}

inline int medoid_frame(const Eigen::MatrixXf& features, int begin, int end) {
  int best = begin;
  double best_sum = std::numeric_limits<double>::infinity();
  for (int j = begin; j < end; ++j) {
    double sum = 0;
    for (int i = begin; i < end; ++i) sum += (features.row(j) - features.row(i)).norm();
    if (sum < best_sum) {
      best_sum = sum;
      best = j;
    }
  }
  return best;
}

}  // namespace detail

struct SynthVideo {
  FrameFeatureSequence<float> video;
  KeyframeAnnotation keyframes;
  UserSummaries users;
  SynthVideoTruth truth;
};

// Generates one video with planted segment structure. Deterministic given
// (options, interest direction, index): serial and parallel generation agree.
inline SynthVideo generate_synthetic_video(const SynthOptions& opt, const Eigen::VectorXd& interest,
                                           std::uint64_t index) {
  Rng rng = Rng(opt.seed).fork(index);
  const int d = opt.feature_dim;
  const int t = rng.uniform_int(opt.t_min, opt.t_max);
  const int budget = static_cast<int>(std::floor(opt.budget_ratio * t));

  int n_segments = rng.uniform_int(opt.segments_min, opt.segments_max);
  int n_important = std::max(1, static_cast<int>(std::lround(opt.important_fraction * n_segments)));
  n_important = std::min(n_important, n_segments);

  // The budget must admit the important segments (user summaries cover them
  // within budget_ratio * T); shed importants if necessary.
  while (n_important > 1 && n_important * opt.important_len_min > budget) {
    --n_important;
    std::cerr << "uvsn: synth video " << index << ": important segments exceed the summary budget, reducing to "
              << n_important << "\n";
  }
  if (n_important * opt.important_len_min > budget) {
    throw ValidationError("synth: budget cannot fit a single important segment; raise T or budget_ratio");
  }

  // Draw lengths. Important segments are short by construction.
  std::vector<int> imp_lens(n_important);
  int imp_total = 0;
  for (int i = 0; i < n_important; ++i) {
    imp_lens[i] = rng.uniform_int(opt.important_len_min, opt.important_len_max);
    imp_total += imp_lens[i];
  }
  while (imp_total > budget) {  // shrink from the back to respect the budget
    for (int i = n_important - 1; i >= 0 && imp_total > budget; --i) {
      if (imp_lens[i] > opt.important_len_min) {
        --imp_lens[i];
        --imp_total;
      }
    }
    if (imp_total > budget) {
      --n_important;
      imp_total -= imp_lens.back();
      imp_lens.pop_back();
      std::cerr << "uvsn: synth video " << index << ": shrinking important set to " << n_important << "\n";
    }
  }

  int n_background = n_segments - n_important;
  if (n_background < 1) n_background = 1;
  while (t - imp_total < n_background * opt.background_len_min) --n_background;
  if (n_background < 1) throw ValidationError("synth: no room for background segments; raise T");
  const auto bg_lens = detail::random_partition(rng, t - imp_total, n_background, opt.background_len_min);
  n_segments = n_important + n_background;

  // Interleave importants among backgrounds.
  struct Seg {
    int len = 0;
    bool important = false;
  };
  std::vector<Seg> segs;
  for (int i = 0; i < n_important; ++i) segs.push_back({imp_lens[i], true});
  for (int i = 0; i < n_background; ++i) segs.push_back({bg_lens[i], false});
  rng.shuffle(segs);

  // Centroids: unit directions pairwise >= 60 degrees apart; important ones
  // lean toward the corpus interest direction.
  std::vector<Eigen::VectorXd> centroids;
  for (const auto& seg : segs) {
    Eigen::VectorXd c;
    int attempts = 0;
    while (true) {
      if (++attempts > 20000) throw Error("synth: failed to place separated segment centroids");
      c = detail::random_unit(rng, d);
      if (seg.important && opt.interest_strength > 0.0) {
        c = (opt.interest_strength * interest + (1.0 - opt.interest_strength) * c).normalized();
      }
      bool ok = true;
      for (const auto& other : centroids) {
        if (c.dot(other) > 0.5) ok = false;
      }
      if (ok) break;
    }
    centroids.push_back(std::move(c));
  }

  SynthVideo out;
  out.video.video_id = opt.id_prefix + "_" + std::to_string(index);
  out.video.features.resize(t, d);
  out.truth.boundaries.push_back(0);
  int pos = 0;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    for (int i = 0; i < segs[s].len; ++i, ++pos) {
      for (int j = 0; j < d; ++j) {
        out.video.features(pos, j) = static_cast<float>(centroids[s](j) + opt.noise_sigma * rng.normal());
      }
    }
    out.truth.boundaries.push_back(pos);
    if (segs[s].important) out.truth.important_segments.push_back(static_cast<int>(s));
  }

  // Ground-truth key frames: the medoid of each important segment.
  out.keyframes.video_id = out.video.video_id;
  out.keyframes.mask.assign(t, 0);
  for (int s : out.truth.important_segments) {
    const int m = detail::medoid_frame(out.video.features, out.truth.boundaries[s], out.truth.boundaries[s + 1]);
    out.keyframes.mask[m] = 1;
    out.truth.medoid_frames.push_back(m);
  }

  // User summaries: keyshot masks over the important segments with +-1
  // frame boundary jitter, trimmed to the budget.
  out.users.video_id = out.video.video_id;
  for (int u = 0; u < opt.n_users; ++u) {
    Mask mask(t, 0);
    for (int s : out.truth.important_segments) {
      int a = out.truth.boundaries[s], b = out.truth.boundaries[s + 1];
      const int ja = rng.uniform_int(-1, 1), jb = rng.uniform_int(-1, 1);
      int a2 = std::max(0, a + ja), b2 = std::min(t, b + jb);
      if (a2 >= b2) {
        a2 = a;
        b2 = b;
      }
      for (int i = a2; i < b2; ++i) mask[i] = 1;
    }
    for (int i = t - 1; i >= 0 && popcount(mask) > budget; --i) mask[i] = 0;
    out.users.masks.push_back(std::move(mask));
  }
  out.video.validate();
  out.keyframes.validate();
  out.users.validate();
  return out;
}

// Writes the corpus (features, key-frame and user annotation files, truth
// sidecars, manifest) under out_dir; returns the manifest path.
inline std::string generate_synthetic_corpus(const SynthOptions& opt, const std::string& out_dir) {
  opt.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  // Corpus-level stream; per-video streams fork on the video index, so this
  // large constant cannot collide with them.
  Rng corpus_rng = Rng(opt.seed).fork(0xC0DE5EEDull);
  const Eigen::VectorXd interest = detail::random_unit(corpus_rng, opt.feature_dim);

  std::vector<ManifestEntry> entries;
  for (int i = 0; i < opt.n_videos; ++i) {
    const auto v = generate_synthetic_video(opt, interest, static_cast<std::uint64_t>(i));
    const std::string stem = v.video.video_id;
    write_features((fs::path(out_dir) / (stem + ".uvsn")).string(), v.video);
    write_annotation_masks((fs::path(out_dir) / (stem + ".kf.uvsa")).string(), {v.keyframes.mask});
    write_annotation_masks((fs::path(out_dir) / (stem + ".users.uvsa")).string(), v.users.masks);

    nlohmann::json truth;
    truth["video_id"] = stem;
    truth["boundaries"] = v.truth.boundaries;
    truth["important_segments"] = v.truth.important_segments;
    truth["medoid_frames"] = v.truth.medoid_frames;
    std::ofstream tf((fs::path(out_dir) / (stem + ".truth.json")).string());
    tf << truth.dump(2) << "\n";

    entries.push_back({stem, Role::paired, stem + ".uvsn", stem + ".kf.uvsa"});
  }
  const std::string manifest = (fs::path(out_dir) / "manifest.tsv").string();
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace uvsn
