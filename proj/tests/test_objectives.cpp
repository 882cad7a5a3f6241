#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>

#include "uvsn/objectives.hpp"
#include "uvsn/rng.hpp"

using namespace uvsn;

namespace {

Eigen::MatrixXd random_rows(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  }
  return m;
}

// Central-difference gradient of a scalar function of a matrix.
Eigen::MatrixXd fd_grad(const std::function<double(const Eigen::MatrixXd&)>& f, Eigen::MatrixXd x, double h = 1e-6) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = f(x);
    x.data()[i] = saved - h;
    const double down = f(x);
    x.data()[i] = saved;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("adversarial loss closed forms") {
  CHECK(adversarial_loss({0.5}, {0.5}) == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-12));
  CHECK(adversarial_loss({1.0 - 1e-9}, {1e-9}) == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(adversarial_loss({0.8, 0.6}, {0.3}) ==
        doctest::Approx((std::log(0.8) + std::log(0.6)) / 2 + std::log(0.7)).epsilon(1e-12));
  CHECK_THROWS_AS(adversarial_loss({}, {0.5}), ValidationError);
  CHECK_THROWS_AS(adversarial_loss({0.5}, {1.0}), ValidationError);
  CHECK_THROWS_AS(adversarial_loss({0.0}, {0.5}), ValidationError);
}

TEST_CASE("adversarial loss is maximized by the uninformative score 0.5") {
  double best_x = -1, best_v = -1e18;
  for (int i = 1; i < 200; ++i) {
    const double x = i / 200.0;
    const double v = adversarial_loss({x}, {x});
    if (v > best_v) {
      best_v = v;
      best_x = x;
    }
  }
  CHECK(best_x == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(best_v == doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("selector adversarial term variants") {
  CHECK(selector_adversarial_term({0.5}, GanObjective::minimax) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  CHECK(selector_adversarial_term({0.5}, GanObjective::non_saturating) ==
        doctest::Approx(-std::log(0.5)).epsilon(1e-12));

  // Both variants push the fake score the same way: the derivative in x is
  // negative everywhere on (0,1).
  for (double x : {0.05, 0.3, 0.5, 0.7, 0.95}) {
    const double h = 1e-7;
    const double g_mm = (selector_adversarial_term({x + h}, GanObjective::minimax) -
                         selector_adversarial_term({x - h}, GanObjective::minimax)) /
                        (2 * h);
    const double g_ns = (selector_adversarial_term({x + h}, GanObjective::non_saturating) -
                         selector_adversarial_term({x - h}, GanObjective::non_saturating)) /
                        (2 * h);
    CHECK(g_mm < 0);
    CHECK(g_ns < 0);
  }
}

TEST_CASE("logit-space adversarial values match the probability forms") {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const double zr = rng.uniform(-8, 8), zf = rng.uniform(-8, 8);
    const double pr = 1.0 / (1.0 + std::exp(-zr)), pf = 1.0 / (1.0 + std::exp(-zf));
    CHECK(adversarial_loss_from_logits(zr, zf) == doctest::Approx(adversarial_loss({pr}, {pf})).epsilon(1e-9));
    CHECK(selector_adversarial_term_from_logit(zf, GanObjective::minimax) ==
          doctest::Approx(selector_adversarial_term({pf}, GanObjective::minimax)).epsilon(1e-9));
    CHECK(selector_adversarial_term_from_logit(zf, GanObjective::non_saturating) ==
          doctest::Approx(selector_adversarial_term({pf}, GanObjective::non_saturating)).epsilon(1e-9));
  }
  // Extreme logits stay finite.
  CHECK(std::isfinite(adversarial_loss_from_logits(500.0, -500.0)));
  CHECK(std::isfinite(adversarial_loss_from_logits(-500.0, 500.0)));
}

TEST_CASE("reconstruction loss values and gradient") {
  SUBCASE("exact match is zero") {
    Eigen::MatrixXd rows(2, 3);
    rows << 1, 2, 3, 4, 5, 6;
    const auto vg = reconstruction_loss_with_grad<double>(rows, {0, 1}, rows);
    CHECK(vg.value == 0.0);
    CHECK(vg.grad.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("unit offsets: k=2, D=4 gives (1/2)(4+4) = 4") {
    Eigen::MatrixXd video = Eigen::MatrixXd::Zero(5, 4);
    Eigen::MatrixXd summary = Eigen::MatrixXd::Ones(2, 4);
    const auto vg = reconstruction_loss_with_grad<double>(summary, {1, 3}, video);
    CHECK(vg.value == doctest::Approx(4.0).epsilon(1e-12));
  }
  SUBCASE("random instance matches the elementwise mean and finite differences") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const int t = rng.uniform_int(3, 10), d = rng.uniform_int(2, 6);
      const int k = rng.uniform_int(1, t);
      const auto video = random_rows(rng, t, d);
      const auto summary = random_rows(rng, k, d);
      std::vector<int> idx;
      for (int i = 0; i < k; ++i) idx.push_back(i);
      const auto vg = reconstruction_loss_with_grad<double>(summary, idx, video);
      double direct = 0.0;
      for (int i = 0; i < k; ++i) direct += (summary.row(i) - video.row(idx[i])).squaredNorm() / k;
      CHECK(vg.value == doctest::Approx(direct).epsilon(1e-12));
      const auto fd = fd_grad(
          [&](const Eigen::MatrixXd& s) { return reconstruction_loss_with_grad<double>(s, idx, video).value; },
          summary);
      CHECK((vg.grad - fd).cwiseAbs().maxCoeff() < 1e-7);
    }
  }
  SUBCASE("out-of-range index is an error") {
    Eigen::MatrixXd rows(1, 2);
    rows << 1, 2;
    CHECK_THROWS_AS(reconstruction_loss_with_grad<double>(rows, {5}, rows), ValidationError);
  }
}

TEST_CASE("diversity loss values") {
  SUBCASE("identical pair scores 1") {
    Eigen::MatrixXd rows(2, 4);
    rows << 1, 2, 0, 1, 1, 2, 0, 1;
    CHECK(diversity_loss_with_grad<double>(rows).value == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("orthogonal pair scores 0") {
    Eigen::MatrixXd rows(2, 4);
    rows << 1, 0, 0, 0, 0, 1, 0, 0;
    CHECK(diversity_loss_with_grad<double>(rows).value == doctest::Approx(0.0).epsilon(1e-7));
  }
  SUBCASE("documented 3-row case: (2 sqrt 2) / 6") {
    Eigen::MatrixXd rows(3, 4);
    rows.setZero();
    rows(0, 0) = 1;
    rows(1, 1) = 1;
    rows(2, 0) = rows(2, 1) = 1.0 / std::sqrt(2.0);
    CHECK(diversity_loss_with_grad<double>(rows).value ==
          doctest::Approx(2.0 * std::sqrt(2.0) / 6.0).epsilon(1e-7));
  }
  SUBCASE("k=1 is defined as zero") {
    Eigen::MatrixXd rows(1, 4);
    rows << 1, 2, 3, 4;
    CHECK(diversity_loss_with_grad<double>(rows).value == 0.0);
  }
  SUBCASE("always within [-1, 1]") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
      const auto rows = random_rows(rng, rng.uniform_int(2, 8), rng.uniform_int(2, 6), -2.0, 2.0);
      const double v = diversity_loss_with_grad<double>(rows).value;
      CHECK(v >= -1.0 - 1e-9);
      CHECK(v <= 1.0 + 1e-9);
    }
  }
  SUBCASE("equals 1 exactly for positive scalar multiples of one vector") {
    Eigen::MatrixXd rows(3, 3);
    rows << 1, 2, 3, 2, 4, 6, 0.5, 1, 1.5;
    CHECK(diversity_loss_with_grad<double>(rows).value == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("diversity gradient matches finite differences") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = rng.uniform_int(2, 6), d = rng.uniform_int(2, 6);
    Eigen::MatrixXd rows = random_rows(rng, k, d);
    // keep rows away from zero norm so the FD step stays in a smooth region
    for (int i = 0; i < k; ++i) {
      if (rows.row(i).norm() < 0.3) rows(i, 0) += 1.0;
    }
    const auto vg = diversity_loss_with_grad<double>(rows);
    const auto fd = fd_grad([](const Eigen::MatrixXd& r) { return diversity_loss_with_grad<double>(r).value; }, rows);
    CHECK((vg.grad - fd).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("supervised loss values and gradient") {
  SUBCASE("uniform scores give log 2") {
    FrameScores<double> scores = FrameScores<double>::Zero(7, 2);
    Mask mask(7, 0);
    mask[2] = 1;
    CHECK(supervised_loss_with_grad<double>(scores, mask).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("saturated correct scores vanish") {
    const int t = 5;
    FrameScores<double> scores(t, 2);
    Mask mask(t, 0);
    for (int i = 0; i < t; ++i) {
      mask[i] = i % 2;
      scores(i, mask[i] ? kKeyClass : kNonKeyClass) = 20.0;
      scores(i, mask[i] ? kNonKeyClass : kKeyClass) = -20.0;
    }
    CHECK(supervised_loss_with_grad<double>(scores, mask).value == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("random scores match the direct log-softmax sum and finite differences") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      const int t = rng.uniform_int(1, 12);
      const Eigen::MatrixXd scores = random_rows(rng, t, 2, -3.0, 3.0);
      Mask mask(t, 0);
      for (int i = 0; i < t; ++i) mask[i] = rng.uniform() < 0.5 ? 1 : 0;
      double direct = 0.0;
      for (int i = 0; i < t; ++i) {
        const int cls = mask[i] ? kKeyClass : kNonKeyClass;
        direct -= scores(i, cls) - std::log(std::exp(scores(i, 0)) + std::exp(scores(i, 1)));
      }
      direct /= t;
      const auto vg = supervised_loss_with_grad<double>(scores, mask);
      CHECK(vg.value == doctest::Approx(direct).epsilon(1e-9));
      const auto fd = fd_grad(
          [&](const Eigen::MatrixXd& s) { return supervised_loss_with_grad<double>(s, mask).value; }, scores);
      CHECK((vg.grad - fd).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
  SUBCASE("invariant under a per-frame constant shift of both classes") {
    Rng rng(13);
    const Eigen::MatrixXd scores = random_rows(rng, 9, 2, -2.0, 2.0);
    Mask mask(9, 1);
    Eigen::MatrixXd shifted = scores;
    for (int i = 0; i < 9; ++i) shifted.row(i).array() += rng.uniform(-5.0, 5.0);
    CHECK(supervised_loss_with_grad<double>(scores, mask).value ==
          doctest::Approx(supervised_loss_with_grad<double>(shifted, mask).value).epsilon(1e-9));
  }
  SUBCASE("length mismatch is an error") {
    FrameScores<double> scores = FrameScores<double>::Zero(3, 2);
    CHECK_THROWS_AS(supervised_loss_with_grad<double>(scores, Mask(4, 1)), ValidationError);
  }
}

TEST_CASE("supervised loss is nonnegative") {
  Rng rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    const int t = rng.uniform_int(1, 10);
    const Eigen::MatrixXd scores = random_rows(rng, t, 2, -4.0, 4.0);
    Mask mask(t, 0);
    mask[rng.uniform_int(0, t - 1)] = 1;
    CHECK(supervised_loss_with_grad<double>(scores, mask).value >= 0.0);
  }
}

TEST_CASE("total selector loss composition") {
  LossWeights w;
  w.beta = 1.0;
  CHECK(total_selector_loss<double>(-0.69, 4.0, 1.0, std::nullopt, w, false) == doctest::Approx(4.31));

  LossWeights paper;
  paper.beta = 0.001;
  paper.gamma = 0.001;
  const double adv = -0.7, rec = 2.0, div = 0.4, psup = 0.6931;
  CHECK(total_selector_loss<double>(adv, rec, div, std::optional<double>(psup), paper, true) ==
        doctest::Approx(adv + rec + 0.001 * div + 0.001 * psup).epsilon(1e-12));

  // The indicator gates the supervision term entirely.
  CHECK(total_selector_loss<double>(adv, rec, div, std::optional<double>(123.0), paper, false) ==
        doctest::Approx(adv + rec + 0.001 * div).epsilon(1e-12));

  LossWeights bad;
  bad.beta = -1;
  CHECK_THROWS_AS(total_selector_loss<double>(0, 0, 0, std::nullopt, bad, false), ValidationError);
}
