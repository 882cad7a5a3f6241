#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "uvsn/datagen.hpp"
#include "uvsn/tempseg.hpp"

using namespace uvsn;
namespace fs = std::filesystem;

namespace {

fs::path test_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("uvsn_test_datagen_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A dataset manifest of `n` synthetic videos with tiny feature files.
NamedDataset make_dataset(const fs::path& root, const std::string& name, int n, std::uint64_t seed) {
  SynthOptions opt;
  opt.n_videos = n;
  opt.t_min = 16;
  opt.t_max = 24;
  opt.feature_dim = 8;
  opt.segments_min = 2;
  opt.segments_max = 3;
  opt.important_fraction = 0.4;
  opt.important_len_min = 1;
  opt.important_len_max = 2;
  opt.background_len_min = 3;
  opt.n_users = 2;
  opt.seed = seed;
  opt.id_prefix = name;
  const std::string manifest = generate_synthetic_corpus(opt, (root / name).string());
  return load_named_dataset(name, manifest);
}

std::string manifest_text(const std::vector<ManifestEntry>& entries) {
  std::ostringstream out;
  for (const auto& e : entries) {
    out << e.video_id << '\t' << to_string(e.role) << '\t' << e.feature_path << '\t' << e.annotation_path << '\n';
  }
  return out.str();
}

}  // namespace

TEST_CASE("standard split reproduces the documented 5/80/79 arithmetic") {
  const auto dir = test_dir("split");
  std::vector<NamedDataset> datasets;
  datasets.push_back(make_dataset(dir, "summe", 25, 1));
  datasets.push_back(make_dataset(dir, "tvsum", 50, 2));
  datasets.push_back(make_dataset(dir, "youtube", 39, 3));
  datasets.push_back(make_dataset(dir, "ovp", 50, 4));

  SplitSpec spec;
  spec.target = "summe";
  spec.seed = 7;
  const auto result = make_unpaired_split(datasets, spec);
  CHECK(result.test_count == 5);
  CHECK(result.raw_count == 80);
  CHECK(result.summary_count == 79);
  CHECK(result.train.size() == 159);

  // Unpairedness and role integrity.
  std::set<std::string> raw_ids, summary_ids;
  for (const auto& e : result.train) {
    if (e.role == Role::raw) raw_ids.insert(e.video_id);
    if (e.role == Role::summary) summary_ids.insert(e.video_id);
  }
  for (const auto& id : raw_ids) CHECK(summary_ids.count(id) == 0);

  // Test entries reference the user-summaries sibling files.
  for (const auto& e : result.test) {
    CHECK(e.role == Role::test);
    CHECK(e.annotation_path.find(".users.uvsa") != std::string::npos);
    CHECK(fs::exists(e.annotation_path));
  }

  // Determinism: same seed, byte-identical manifests.
  const auto again = make_unpaired_split(datasets, spec);
  CHECK(manifest_text(result.train) == manifest_text(again.train));
  CHECK(manifest_text(result.test) == manifest_text(again.test));

  SplitSpec other = spec;
  other.seed = 8;
  const auto different = make_unpaired_split(datasets, other);
  CHECK(manifest_text(result.train) != manifest_text(different.train));
}

TEST_CASE("transfer split holds out the whole target") {
  const auto dir = test_dir("transfer");
  std::vector<NamedDataset> datasets;
  datasets.push_back(make_dataset(dir, "summe", 25, 1));
  datasets.push_back(make_dataset(dir, "tvsum", 20, 2));
  datasets.push_back(make_dataset(dir, "ovp", 15, 3));

  SplitSpec spec;
  spec.target = "summe";
  spec.mode = SplitMode::transfer;
  const auto result = make_unpaired_split(datasets, spec);
  CHECK(result.test_count == 25);
  CHECK(result.train.size() == 35);
  for (const auto& e : result.train) {
    CHECK(e.video_id.rfind("summe", 0) != 0);  // no target id in training
  }
}

TEST_CASE("split rejects bad inputs") {
  const auto dir = test_dir("errors");
  std::vector<NamedDataset> datasets;
  datasets.push_back(make_dataset(dir, "a", 4, 1));

  SplitSpec spec;
  spec.target = "missing";
  CHECK_THROWS_AS(make_unpaired_split(datasets, spec), ConfigError);

  // Duplicate ids across datasets are rejected rather than renamed.
  auto dup = datasets;
  dup.push_back(datasets[0]);
  dup[1].name = "b";
  spec.target = "a";
  CHECK_THROWS_WITH_AS(make_unpaired_split(dup, spec), doctest::Contains("more than one dataset"), ValidationError);

  // Transfer mode with a single dataset has an empty pool.
  CHECK_THROWS_AS(
      [&] {
        SplitSpec s;
        s.target = "a";
        s.mode = SplitMode::transfer;
        return make_unpaired_split(datasets, s);
      }(),
      ValidationError);
}

TEST_CASE("split-level partial supervision produces paired roles") {
  const auto dir = test_dir("psup");
  std::vector<NamedDataset> datasets;
  datasets.push_back(make_dataset(dir, "x", 20, 5));
  datasets.push_back(make_dataset(dir, "y", 20, 6));
  SplitSpec spec;
  spec.target = "x";
  spec.psup_fraction = 0.1;
  const auto result = make_unpaired_split(datasets, spec);
  // Pool 36, raw side 18, ceil(0.1 * 18) = 2 paired.
  CHECK(result.paired_count == 2);
  CHECK(result.raw_count == 18);
  int paired_seen = 0;
  for (const auto& e : result.train) {
    if (e.role == Role::paired) {
      ++paired_seen;
      CHECK(fs::exists(e.annotation_path));
    }
  }
  CHECK(paired_seen == 2);
  // The paired entries are the first raw entries in manifest order.
  CHECK(result.train[0].role == Role::paired);
  CHECK(result.train[1].role == Role::paired);
}

TEST_CASE("mark_partial_supervision ceiling arithmetic and order") {
  const auto dir = test_dir("mark");
  // Build a manifest of 8 raw entries with real annotation files.
  auto ds = make_dataset(dir, "m", 8, 9);
  std::vector<ManifestEntry> entries;
  for (auto e : ds.entries) {
    e.role = Role::raw;
    e.feature_path = (fs::path(dir / "m") / e.feature_path).string();
    e.annotation_path = (fs::path(dir / "m") / e.annotation_path).string();
    entries.push_back(e);
  }
  SUBCASE("fraction 0 leaves the manifest unchanged") {
    auto copy = entries;
    CHECK(mark_partial_supervision(copy, 0.0) == 0);
    CHECK(manifest_text(copy) == manifest_text(entries));
  }
  SUBCASE("fraction 0.1 of 8 raw videos marks ceil(0.8) = 1, the first") {
    auto copy = entries;
    CHECK(mark_partial_supervision(copy, 0.1) == 1);
    CHECK(copy[0].role == Role::paired);
    CHECK(copy[1].role == Role::raw);
  }
  SUBCASE("fraction 1 pairs everything") {
    auto copy = entries;
    CHECK(mark_partial_supervision(copy, 1.0) == 8);
    for (const auto& e : copy) CHECK(e.role == Role::paired);
  }
  SUBCASE("missing annotation file is an error") {
    auto copy = entries;
    copy[0].annotation_path = (dir / "nope.uvsa").string();
    CHECK_THROWS_WITH_AS(mark_partial_supervision(copy, 0.5), doctest::Contains("missing annotation"),
                         ValidationError);
  }
}

TEST_CASE("synthetic corpus: files, invariants and planted truth") {
  const auto dir = test_dir("synth");
  SynthOptions opt;
  opt.n_videos = 12;
  opt.t_min = 48;
  opt.t_max = 72;
  opt.feature_dim = 16;
  opt.n_users = 3;
  opt.seed = 21;
  const std::string manifest = generate_synthetic_corpus(opt, (dir / "corpus").string());
  const auto entries = read_manifest(manifest);
  REQUIRE(entries.size() == 12);

  for (const auto& e : entries) {
    const auto v = read_features<float>(resolve_path(manifest, e.feature_path), e.video_id);
    const auto kf = read_keyframe_annotation(resolve_path(manifest, e.annotation_path), e.video_id);
    const auto users =
        read_user_summaries(resolve_path(manifest, users_annotation_path(e.annotation_path)), e.video_id);
    CHECK(users.users() == 3);
    CHECK(static_cast<Eigen::Index>(kf.mask.size()) == v.frames());
    const int budget = static_cast<int>(std::floor(0.15 * static_cast<double>(v.frames())));
    CHECK(popcount(kf.mask) >= 1);
    CHECK(popcount(kf.mask) <= budget);
    for (const auto& mask : users.masks) {
      CHECK(popcount(mask) >= 1);
      CHECK(popcount(mask) <= budget);
    }

    // Truth sidecar agrees with the ground truth annotation.
    std::ifstream tf(resolve_path(manifest, e.video_id + ".truth.json"));
    REQUIRE(tf.good());
    nlohmann::json truth;
    tf >> truth;
    CHECK(truth["video_id"] == e.video_id);
    const auto medoids = truth["medoid_frames"].get<std::vector<int>>();
    CHECK(static_cast<int>(medoids.size()) == popcount(kf.mask));
    for (int m : medoids) CHECK(kf.mask[m] == 1);
    const auto bounds = truth["boundaries"].get<std::vector<int>>();
    CHECK(bounds.front() == 0);
    CHECK(bounds.back() == v.frames());
  }
}

TEST_CASE("generation is reproducible and videos are independent of order") {
  SynthOptions opt;
  opt.n_videos = 4;
  opt.seed = 33;
  Eigen::VectorXd interest = Eigen::VectorXd::Zero(opt.feature_dim);
  interest(0) = 1.0;
  const auto a = generate_synthetic_video(opt, interest, 2);
  const auto b = generate_synthetic_video(opt, interest, 2);
  CHECK(a.video.features == b.video.features);
  CHECK(a.keyframes.mask == b.keyframes.mask);
  const auto c = generate_synthetic_video(opt, interest, 3);
  CHECK(a.video.features != c.video.features);
}

TEST_CASE("zero noise: per-segment frames identical, KTS recovers boundaries exactly") {
  SynthOptions opt;
  opt.noise_sigma = 0.0;
  opt.t_min = 40;
  opt.t_max = 40;
  opt.segments_min = 4;
  opt.segments_max = 4;
  opt.seed = 11;
  Rng interest_rng(5);
  const Eigen::VectorXd interest = detail::random_unit(interest_rng, opt.feature_dim);
  const auto v = generate_synthetic_video(opt, interest, 0);
  const int segs = static_cast<int>(v.truth.boundaries.size()) - 1;
  for (int s = 0; s < segs; ++s) {
    for (int i = v.truth.boundaries[s] + 1; i < v.truth.boundaries[s + 1]; ++i) {
      CHECK(v.video.features.row(i) == v.video.features.row(v.truth.boundaries[s]));
    }
  }
  const auto found = kts(v.video, segs, 0.0);
  CHECK(found.boundaries == v.truth.boundaries);
}

TEST_CASE("corpus statistics: key-frame fraction tracks important_fraction / mean segment length") {
  SynthOptions opt;
  opt.n_videos = 120;
  opt.t_min = 90;
  opt.t_max = 110;
  opt.feature_dim = 12;
  opt.segments_min = 8;
  opt.segments_max = 8;
  opt.important_fraction = 0.25;
  opt.important_len_min = 2;
  opt.important_len_max = 2;
  opt.seed = 77;
  Eigen::VectorXd interest = Eigen::VectorXd::Zero(opt.feature_dim);
  interest(1) = 1.0;
  double keys = 0, frames = 0, segments = 0;
  for (int i = 0; i < opt.n_videos; ++i) {
    const auto v = generate_synthetic_video(opt, interest, static_cast<std::uint64_t>(i));
    keys += popcount(v.keyframes.mask);
    frames += static_cast<double>(v.video.frames());
    segments += static_cast<double>(v.truth.boundaries.size()) - 1;
  }
  const double observed = keys / frames;
  const double mean_len = frames / segments;
  const double expected = opt.important_fraction / mean_len;
  CHECK(observed == doctest::Approx(expected).epsilon(0.2));
}
