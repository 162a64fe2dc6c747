#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "miup/attacks.hpp"
#include "miup/dataset.hpp"
#include "miup/mean_lab.hpp"
#include "miup/stats.hpp"

using namespace miup;

namespace {

ZeroOneTable table_from(std::array<double, 4> update, std::array<double, 4> test) {
  ZeroOneTable t;
  t.update = update;
  t.test = test;
  return t;
}

}  // namespace

TEST_CASE("quantile convention: median and interpolated percentiles") {
  CHECK(quantile_type7({1.0, 2.0, 3.0}, 0.5) == 2.0);
  std::vector<double> one_to_hundred;
  for (int i = 1; i <= 100; ++i) one_to_hundred.push_back(i);
  CHECK(quantile_type7(one_to_hundred, 0.1) == doctest::Approx(10.9));
  CHECK(calibrate_batch({1.0, 2.0, 3.0}, ThresholdMode::Accuracy) == 2.0);
  CHECK(calibrate_batch(one_to_hundred, ThresholdMode::Precision) ==
        doctest::Approx(10.9));
  CHECK(calibrate_rank(one_to_hundred, 0.1) == doctest::Approx(10.9));
  CHECK(calibrate_rank(one_to_hundred, 0.5) == doctest::Approx(50.5));
  CHECK(calibrate_batch({4.25}, ThresholdMode::Accuracy) == 4.25);
  CHECK(calibrate_batch({4.25}, ThresholdMode::Precision) == 4.25);
  CHECK_THROWS_AS(calibrate_batch({}, ThresholdMode::Accuracy), std::invalid_argument);
  CHECK_THROWS_AS(calibrate_rank({1.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(calibrate_rank({}, 0.5), std::invalid_argument);
}

TEST_CASE("quantiles are translation-equivariant") {
  Rng rng(10);
  std::vector<double> scores;
  for (int i = 0; i < 200; ++i) scores.push_back(rng.normal());
  std::vector<double> shifted = scores;
  for (double& s : shifted) s += 3.25;
  for (double q : {0.1, 0.33, 0.5, 0.9}) {
    CHECK(quantile_type7(shifted, q) ==
          doctest::Approx(quantile_type7(scores, q) + 3.25));
  }
}

TEST_CASE("rank threshold hits the requested false-positive rate") {
  Rng rng(77);
  std::vector<double> calibration;
  for (int i = 0; i < 4000; ++i) calibration.push_back(rng.normal());
  const double q = 0.1;
  const double threshold = calibrate_rank(calibration, q);
  int below = 0;
  const int fresh = 20000;
  for (int i = 0; i < fresh; ++i) below += rng.normal() < threshold ? 1 : 0;
  const double rate = static_cast<double>(below) / fresh;
  const double band = 3.0 * std::sqrt(q * (1.0 - q) / fresh) + 0.01;
  CHECK(std::abs(rate - q) < band);
}

TEST_CASE("combiners: identities, damping, monotonicity") {
  CHECK(combine_diff(1.5, 1.5) == 0.0);
  CHECK(combine_ratio(1.5, 1.5, 1e-6) == doctest::Approx(1.0));
  CHECK(combine_ratio(0.0, 0.0, 0.5) == 1.0);
  CHECK(combine_diff(2.0, 5.0) == -combine_diff(5.0, 2.0));
  CHECK_THROWS_AS(combine_ratio(1.0, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(combine_ratio(1.0, 1.0, -1.0), std::invalid_argument);

  // As the damping constant grows, the ratio collapses to 1.
  for (double c : {1e2, 1e4, 1e6}) {
    CHECK(std::abs(combine_ratio(0.3, 7.0, c) - 1.0) < 10.0 / c);
  }

  // Strictly increasing in the post-update score at a fixed positive base.
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const double s0 = 0.1 + std::abs(rng.normal());
    const double a = std::abs(rng.normal());
    const double b = a + 0.1 + std::abs(rng.normal());
    CHECK(combine_diff(s0, a) < combine_diff(s0, b));
    CHECK(combine_ratio(s0, a, 1e-6) < combine_ratio(s0, b, 1e-6));
  }
}

TEST_CASE("combiner values match the analyzed one-point mean update") {
  // One gradient step on the squared distance from a single update point
  // multiplies that point's loss by (1-2 eta)^2, so the combined scores
  // take closed forms.
  Rng rng(8);
  const int d = 6;
  const double eta = 0.25;
  Eigen::VectorXd f0(d), x(d);
  for (int j = 0; j < d; ++j) {
    f0[j] = rng.normal();
    x[j] = rng.normal();
  }
  Eigen::MatrixXd d1(1, d);
  d1.row(0) = x.transpose();
  const Eigen::VectorXd f1 = mean_lab::grad_step_mean(
      f0, d1, Eigen::MatrixXd(0, d), eta, UpdateKind::SGDNew,
      mean_lab::MeanLossKind::SquaredL2);

  const double l0 = mean_lab::mean_loss_sq(f0, x);
  const double l1 = mean_lab::mean_loss_sq(f1, x);
  CHECK(combine_diff(l0, l1) == doctest::Approx(-0.75 * l0).epsilon(1e-9));
  CHECK(combine_ratio(l0, l1, 1e-12) == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("decision rule: strict inequality, ties go OUT") {
  CHECK_FALSE(decide_in(2.0, 2.0));
  CHECK(decide_in(2.0 - 1e-12, 2.0));
  CHECK_FALSE(decide_in(2.0 + 1e-12, 2.0));

  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const double combined = rng.normal();
    const double threshold = rng.normal();
    CHECK(decide_in(combined, threshold) == (combined < threshold));
  }

  // A batch-median threshold over an odd list marks floor(n/2) points IN.
  std::vector<double> scores = {5.0, 1.0, 3.0, 2.0, 4.0};
  const double median_threshold = calibrate_batch(scores, ThresholdMode::Accuracy);
  int in_count = 0;
  for (double s : scores) in_count += decide_in(s, median_threshold) ? 1 : 0;
  CHECK(in_count == 2);
}

TEST_CASE("delta thresholds assign exactly n_up calibration points per epoch") {
  Rng rng(19);
  const int k = 4;
  const int n_up = 25;
  const int n_points = 2 * k * n_up;
  std::vector<std::vector<double>> pair_scores(
      k, std::vector<double>(static_cast<std::size_t>(n_points)));
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < n_points; ++j) {
      pair_scores[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          rng.normal();
    }
  }
  const std::vector<double> thresholds = delta_thresholds(pair_scores, k, n_up);
  REQUIRE(thresholds.size() == static_cast<std::size_t>(k));

  std::vector<bool> assigned(static_cast<std::size_t>(n_points), false);
  for (int i = 0; i < k; ++i) {
    int below = 0;
    for (int j = 0; j < n_points; ++j) {
      if (assigned[static_cast<std::size_t>(j)]) continue;
      if (pair_scores[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] <
          thresholds[static_cast<std::size_t>(i)]) {
        ++below;
        assigned[static_cast<std::size_t>(j)] = true;
      }
    }
    CHECK(below == n_up);
  }
}

TEST_CASE("delta thresholds: k=1 boundary and insufficient points") {
  const std::vector<std::vector<double>> scores = {{4.0, 1.0, 3.0, 2.0}};
  const std::vector<double> t = delta_thresholds(scores, 1, 2);
  // Midpoint between the 2nd and 3rd smallest scores.
  CHECK(t[0] == doctest::Approx(2.5));
  CHECK_THROWS_AS(delta_thresholds(scores, 1, 4), std::invalid_argument);
  CHECK_THROWS_AS(delta_thresholds(scores, 2, 1), std::invalid_argument);
}

TEST_CASE("delta thresholds keep per-epoch counts near n_up on fresh draws") {
  Rng rng(23);
  const int k = 3;
  const int n_up = 100;
  const int n_points = 2 * k * n_up;
  auto draw = [&]() {
    std::vector<std::vector<double>> scores(
        k, std::vector<double>(static_cast<std::size_t>(n_points)));
    for (auto& row : scores) {
      for (double& v : row) v = rng.normal();
    }
    return scores;
  };
  const auto thresholds = delta_thresholds(draw(), k, n_up);
  const auto fresh = draw();
  // Fresh points scanned in epoch order, first epoch below threshold wins.
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int j = 0; j < n_points; ++j) {
    for (int i = 0; i < k; ++i) {
      if (fresh[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] <
          thresholds[static_cast<std::size_t>(i)]) {
        ++counts[static_cast<std::size_t>(i)];
        break;
      }
    }
  }
  for (int i = 0; i < k; ++i) {
    CHECK(std::abs(counts[static_cast<std::size_t>(i)] - n_up) <=
          3.0 * std::sqrt(n_up) + 3.0);
  }
}

TEST_CASE("delta attack scans pairs in order and reports the first hit") {
  // Four identical models: every pair's diff-combined score is exactly 0,
  // so the thresholds alone decide the scan.
  Model m = init_model({2, {}, 2}, 0);
  UpdateTrace trace;
  trace.models = {m, m, m, m, m};
  Dataset dummy;
  dummy.features = Eigen::MatrixXd::Zero(1, 2);
  dummy.labels = {0};
  dummy.num_classes = 2;
  trace.initial_set = dummy;
  trace.update_sets = {dummy, dummy, dummy, dummy};

  const LossScorer scorer;
  const Combiner diff{CombinerKind::Diff, 1e-6};
  const Eigen::Vector2d x(0.3, -0.7);

  auto verdict = delta_attack(x, 0, trace, diff, scorer, {-1.0, 5.0, -1.0, 5.0});
  CHECK(verdict.in);
  CHECK(verdict.epoch == 2);

  verdict = delta_attack(x, 0, trace, diff, scorer, {-1.0, -1.0, 1.0, -1.0});
  CHECK(verdict.in);
  CHECK(verdict.epoch == 3);

  verdict = delta_attack(x, 0, trace, diff, scorer, {-1.0, -1.0, -1.0, -1.0});
  CHECK_FALSE(verdict.in);

  CHECK_THROWS_AS(delta_attack(x, 0, trace, diff, scorer, {1.0}),
                  std::invalid_argument);

  // Back-front with k >= 1 compares only the first and last model; with
  // identical models and a positive threshold every point decides IN.
  CHECK(back_front(x, 0, trace, diff, scorer, 0.5));
  CHECK_FALSE(back_front(x, 0, trace, diff, scorer, -0.5));
}

TEST_CASE("score_diff and score_ratio over model pairs") {
  // Two toy models trained for different lengths on the same data.
  Dataset data;
  data.features = Eigen::MatrixXd(6, 2);
  data.features << 0.0, 0.1, 0.2, -0.1, 1.9, 2.1, 2.2, 1.8, 0.1, -0.2, 2.0, 2.0;
  data.labels = {0, 0, 1, 1, 0, 1};
  data.num_classes = 2;
  const Model f0 = train_initial({2, {}, 2}, {0.1, 6, 3, 1}, data);
  const Model f1 = train(f0, data, {0.1, 6, 5, 2});

  const LossScorer scorer;
  const Eigen::Vector2d x(0.4, 0.2);
  CHECK(score_diff(x, 0, f0, f0, scorer) == 0.0);
  CHECK(score_ratio(x, 0, f0, f0, scorer, 1e-6) == doctest::Approx(1.0));
  CHECK(score_diff(x, 0, f0, f1, scorer) ==
        doctest::Approx(-score_diff(x, 0, f1, f0, scorer)));
  CHECK(score_diff(x, 0, f0, f1, scorer) ==
        doctest::Approx(loss(f1, x, 0) - loss(f0, x, 0)));
  CHECK_THROWS_AS(score_ratio(x, 0, f0, f1, scorer, 0.0), std::invalid_argument);
}

TEST_CASE("zero-one table validation") {
  CHECK_THROWS_AS(validate_zero_one_table(
                      table_from({0.5, 0.5, 0.1, 0.0}, {0.25, 0.25, 0.25, 0.25})),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate_zero_one_table(
                      table_from({0.5, 0.6, -0.1, 0.0}, {0.25, 0.25, 0.25, 0.25})),
                  std::invalid_argument);
}

TEST_CASE("identical update and test tables give accuracy one half") {
  const ZeroOneTable t =
      table_from({0.4, 0.2, 0.3, 0.1}, {0.4, 0.2, 0.3, 0.1});
  CHECK(optimal_01_attack(t, false).accuracy == doctest::Approx(0.5));
  CHECK(optimal_01_attack(t, true).accuracy == doctest::Approx(0.5));
}

TEST_CASE("assumption-violating table: updates strictly help") {
  // The initial model performs better on update points (0.9 vs 0.5 correct
  // mass), breaking the equal-performance assumption.
  const ZeroOneTable t =
      table_from({0.5, 0.4, 0.05, 0.05}, {0.25, 0.25, 0.25, 0.25});
  const ZeroOneAttack without = optimal_01_attack(t, false);
  const ZeroOneAttack with = optimal_01_attack(t, true);
  CHECK(without.accuracy == doctest::Approx(0.525));
  CHECK(with.accuracy == doctest::Approx(0.7));
  CHECK(with.accuracy > without.accuracy);
}

TEST_CASE("under the two assumptions the update table never helps") {
  Rng rng(2024);
  for (int i = 0; i < 10000; ++i) {
    const ZeroOneTable t = sample_assumption_table(rng);
    const ZeroOneAttack without = optimal_01_attack(t, false);
    const ZeroOneAttack with = optimal_01_attack(t, true);
    REQUIRE(with.accuracy == without.accuracy);
    // The optimal rule is the same in both cases: trust the updated model.
    REQUIRE(with.decide_in == std::array<bool, 4>{true, false, true, false});
  }
}
