#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "uvsn/network.hpp"
#include "uvsn/rng.hpp"

using namespace uvsn;
using uvsn_gradcheck::CheckSpec;
using uvsn_gradcheck::check_gradients;
using uvsn_gradcheck::small_config;
using uvsn_gradcheck::stable_instances;

namespace {

FrameFeatureSequence<double> random_video(Rng& rng, int t, int d, double lo = -1, double hi = 1) {
  FrameFeatureSequence<double> v;
  v.video_id = "v";
  v.features.resize(t, d);
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < d; ++j) v.features(i, j) = rng.uniform(lo, hi);
  }
  return v;
}

}  // namespace

TEST_CASE("zero parameters: uniform scores, first-k tie break, pass-through features") {
  NetworkConfig cfg = small_config();
  auto sel = make_selector_params<double>(cfg);
  Rng rng(1);
  const auto v = random_video(rng, 8, cfg.feature_dim);
  const auto out = selector_forward(sel, cfg, v, 3);
  CHECK(out.scores.rows() == 8);
  CHECK(out.scores.cols() == 2);
  CHECK(out.scores.cwiseAbs().maxCoeff() == 0.0);  // all-zero scores
  const auto p = key_probabilities(out.scores);
  CHECK(p.minCoeff() == doctest::Approx(0.5));
  CHECK(p.maxCoeff() == doctest::Approx(0.5));
  CHECK(out.summary.selected_indices == std::vector<int>{0, 1, 2});
  // Reconstruction head is zero, so merged features are the input rows.
  for (int i = 0; i < 3; ++i) {
    CHECK((out.summary.features.row(i) - v.features.row(i)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("shape contract: T=32, D=16, k=4") {
  NetworkConfig cfg;
  cfg.feature_dim = 16;
  cfg.encoder_channels = {8, 8};
  cfg.encoder_depth = 2;
  cfg.disc_channels = {8};
  cfg.disc_depth = 1;
  auto [sel, disc] = init_params<double>(cfg, 7);
  Rng rng(2);
  const auto v = random_video(rng, 32, 16);
  const auto out = selector_forward(sel, cfg, v, 4);
  CHECK(out.scores.rows() == 32);
  CHECK(out.scores.cols() == 2);
  CHECK(out.summary.features.rows() == 4);
  CHECK(out.summary.features.cols() == 16);
  CHECK_NOTHROW(out.summary.validate_against(32));
}

TEST_CASE("select_keyframes top-k and tie rules") {
  // Scores built so the key probability equals a monotone map of column 0.
  const auto scores_for = [](const std::vector<double>& p) {
    FrameScores<double> s = FrameScores<double>::Zero(static_cast<int>(p.size()), 2);
    for (std::size_t i = 0; i < p.size(); ++i) s(static_cast<int>(i), kKeyClass) = p[i];
    return s;
  };
  CHECK(select_keyframes(scores_for({0.9, 0.1, 0.8, 0.7}), 2) == std::vector<int>{0, 2});
  CHECK(select_keyframes(scores_for({0.4, 0.4, 0.4, 0.4}), 3) == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(select_keyframes(scores_for({0.1, 0.2}), 3), ValidationError);

  // Random scores match a brute-force stable sort.
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int t = rng.uniform_int(1, 30);
    const int k = rng.uniform_int(1, t);
    FrameScores<double> s(t, 2);
    for (int i = 0; i < t; ++i) {
      s(i, 0) = rng.uniform(-2, 2);
      s(i, 1) = rng.uniform(-2, 2);
    }
    const auto got = select_keyframes(s, k);
    const auto p = key_probabilities(s);
    std::vector<int> order(t);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p(a) > p(b); });
    std::vector<int> expect(order.begin(), order.begin() + k);
    std::sort(expect.begin(), expect.end());
    CHECK(got == expect);
  }
}

TEST_CASE("selector rejects bad arguments") {
  NetworkConfig cfg = small_config();
  auto sel = make_selector_params<double>(cfg);
  Rng rng(4);
  const auto v = random_video(rng, 8, cfg.feature_dim);
  CHECK_THROWS_AS(selector_forward(sel, cfg, v, 9), ValidationError);   // k > T
  CHECK_THROWS_AS(selector_forward(sel, cfg, v, 0), ValidationError);
  const auto bad = random_video(rng, 8, cfg.feature_dim + 1);
  CHECK_THROWS_WITH_AS(selector_forward(sel, cfg, bad, 2), doctest::Contains("dimension mismatch"), ValidationError);
}

TEST_CASE("short inputs are processed via replication padding") {
  NetworkConfig cfg = small_config();  // depth 2, min length 4
  auto [sel, disc] = init_params<double>(cfg, 11);
  Rng rng(5);
  const auto v = random_video(rng, 2, cfg.feature_dim);  // shorter than 2^depth
  const auto out = selector_forward(sel, cfg, v, 1);
  CHECK(out.scores.rows() == 2);  // padded scores are discarded
  CHECK(out.summary.selected_indices.size() == 1);
  CHECK(out.summary.selected_indices[0] < 2);
}

TEST_CASE("discriminator basics") {
  NetworkConfig cfg = small_config();
  auto disc = make_discriminator_params<double>(cfg);
  SummaryFeatureSequence<double> s;
  s.video_id = "s";
  Rng rng(6);
  s.features.resize(4, cfg.feature_dim);
  for (int i = 0; i < 4; ++i) {
    s.selected_indices.push_back(i);
    for (int j = 0; j < cfg.feature_dim; ++j) s.features(i, j) = rng.uniform(-1, 1);
  }

  SUBCASE("zero parameters score exactly one half") {
    CHECK(discriminator_forward(disc, cfg, s) == 0.5);
  }
  SUBCASE("random parameters stay strictly inside (0,1)") {
    for (int trial = 0; trial < 50; ++trial) {
      auto [sel2, disc2] = init_params<double>(cfg, 100 + trial);
      const double p = discriminator_forward(disc2, cfg, s);
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
  }
  SUBCASE("raising the final bias raises the score") {
    auto [sel2, disc2] = init_params<double>(cfg, 9);
    const double before = discriminator_forward(disc2, cfg, s);
    disc2.fc_b += 1.0;
    const double after = discriminator_forward(disc2, cfg, s);
    CHECK(after > before);
  }
  SUBCASE("summaries below the minimum temporal extent are rejected") {
    NetworkConfig deep = cfg;
    deep.disc_depth = 3;
    deep.disc_channels = {4, 4, 4};
    auto disc3 = make_discriminator_params<double>(deep);
    CHECK_THROWS_WITH_AS(discriminator_forward_traced(disc3, deep, s.features),
                         doctest::Contains("minimum temporal extent"), ValidationError);
  }
}

TEST_CASE("init: deterministic per seed, seeds differ, fan-in scaling") {
  NetworkConfig cfg = small_config();
  auto [a_sel, a_disc] = init_params<float>(cfg, 42);
  auto [b_sel, b_disc] = init_params<float>(cfg, 42);
  auto av = collect_arrays(a_sel);
  auto bv = collect_arrays(b_sel);
  for (std::size_t i = 0; i < av.size(); ++i) {
    for (Eigen::Index j = 0; j < av[i].size; ++j) CHECK(av[i].data[j] == bv[i].data[j]);
  }
  auto [c_sel, c_disc] = init_params<float>(cfg, 43);
  auto cv = collect_arrays(c_sel);
  bool any_diff = false;
  for (std::size_t i = 0; i < av.size(); ++i) {
    for (Eigen::Index j = 0; j < av[i].size; ++j) any_diff = any_diff || (av[i].data[j] != cv[i].data[j]);
  }
  CHECK(any_diff);

  // Biases start at zero.
  CHECK(a_sel.encoder[0].b.cwiseAbs().maxCoeff() == 0.0f);
  CHECK(a_disc.fc_b == 0.0f);

  // Empirical std of conv weights ~ 1/sqrt(fan_in) over >= 10^4 draws.
  NetworkConfig wide = cfg;
  wide.feature_dim = 64;
  wide.encoder_channels = {64, 64};
  wide.disc_channels = {16};
  auto [w_sel, w_disc] = init_params<double>(wide, 7);
  double sum = 0, sum2 = 0;
  long n = 0;
  for (const auto& w : w_sel.encoder[0].w) {
    sum += w.sum();
    sum2 += w.squaredNorm();
    n += w.size();
  }
  REQUIRE(n >= 10000);
  const double mean = sum / n;
  const double stddev = std::sqrt(sum2 / n - mean * mean);
  const double target = 1.0 / std::sqrt(64.0 * 3.0);  // fan_in = C_in * K
  CHECK(stddev == doctest::Approx(target).epsilon(0.2));
}

TEST_CASE("forward is deterministic") {
  NetworkConfig cfg = small_config();
  auto [sel, disc] = init_params<double>(cfg, 21);
  Rng rng(8);
  const auto v = random_video(rng, 13, cfg.feature_dim);
  const auto a = selector_forward(sel, cfg, v, 4);
  const auto b = selector_forward(sel, cfg, v, 4);
  CHECK(a.scores == b.scores);
  CHECK(a.summary.selected_indices == b.summary.selected_indices);
  CHECK(a.summary.features == b.summary.features);
}

TEST_CASE("selected indices always satisfy the summary invariants") {
  NetworkConfig cfg = small_config();
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    auto [sel, disc] = init_params<double>(cfg, 300 + trial);
    const int t = rng.uniform_int(1, 40);
    const int k = rng.uniform_int(1, t);
    const auto v = random_video(rng, t, cfg.feature_dim);
    const auto out = selector_forward(sel, cfg, v, k);
    CHECK_NOTHROW(out.summary.validate_against(t));
    CHECK(static_cast<int>(out.summary.selected_indices.size()) == k);
  }
}

TEST_CASE("interior scores shift with the input by the total pooling factor") {
  NetworkConfig cfg = small_config();  // depth 2 -> factor 4
  auto [sel, disc] = init_params<double>(cfg, 31);
  Rng rng(10);
  const int t = 64, shift = cfg.total_pool_factor();
  const auto v = random_video(rng, t, cfg.feature_dim);
  FrameFeatureSequence<double> shifted;
  shifted.video_id = "shifted";
  shifted.features.resize(t, cfg.feature_dim);
  for (int i = 0; i < t; ++i) shifted.features.row(i) = v.features.row(std::max(0, i - shift));
  const auto a = selector_forward(sel, cfg, v, 4);
  const auto b = selector_forward(sel, cfg, shifted, 4);
  // Compare away from both boundaries (receptive field is ~15 frames here).
  for (int i = 24; i < t - 24; ++i) {
    CHECK(b.scores(i + shift, 0) == doctest::Approx(a.scores(i, 0)).epsilon(1e-9));
    CHECK(b.scores(i + shift, 1) == doctest::Approx(a.scores(i, 1)).epsilon(1e-9));
  }
}

TEST_CASE("gradient check: every loss term and both composites") {
  // A compact version of the acceptance gradient suite for fast feedback.
  const auto instances = stable_instances(4, 1000);
  LossWeights w;
  w.beta = 0.7;
  w.gamma = 0.9;

  const auto run = [&](const char* name, TermFlags flags, bool with_real, bool paired, bool check_sel,
                       bool check_disc) {
    for (const auto& inst : instances) {
      CheckSpec spec{flags, with_real, paired, w};
      const auto res = check_gradients(inst, spec, check_sel, check_disc);
      INFO(name << ": worst " << res.worst);
      CHECK(res.max_rel_err < 1e-4);
    }
  };

  run("adversarial (Eq.2)", TermFlags{true, false, false, false}, true, false, true, true);
  run("reconstruction (Eq.4)", TermFlags{false, false, false, true}, false, false, true, false);
  run("diversity (Eq.5)", TermFlags{false, true, false, false}, false, false, true, false);
  run("supervision (Eq.8)", TermFlags{false, false, true, false}, false, true, true, false);
  run("composite (Eq.6)", TermFlags{true, true, false, true}, true, false, true, true);
  run("composite+psup (Eq.9)", TermFlags{true, true, true, true}, true, true, true, true);
}
