#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "miup/dp_audit.hpp"
#include "miup/stats.hpp"

using namespace miup;

namespace {

// Independent Clopper-Pearson oracle: bisect p against the exact binomial
// tail sums rather than going through the beta quantile.
double cp_lower_oracle(std::int64_t s, std::int64_t n, double confidence) {
  if (s == 0) return 0.0;
  const double tail = (1.0 - confidence) / 2.0;
  double lo = 0.0, hi = 1.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    // Lower limit: largest p with P[X >= s | p] <= tail.
    if (binomial_upper_tail(s, n, mid) > tail) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double cp_upper_oracle(std::int64_t s, std::int64_t n, double confidence) {
  if (s == n) return 1.0;
  const double tail = (1.0 - confidence) / 2.0;
  double lo = 0.0, hi = 1.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    // Upper limit: smallest p with P[X <= s | p] <= tail.
    if (1.0 - binomial_upper_tail(s + 1, n, mid) > tail) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("clopper_pearson: boundary counts") {
  CHECK(clopper_pearson(0, 50, 0.98).first == 0.0);
  CHECK(clopper_pearson(50, 50, 0.98).second == 1.0);
  CHECK(clopper_pearson(0, 50, 0.98).second < 1.0);
  CHECK(clopper_pearson(50, 50, 0.98).first > 0.0);
  CHECK_THROWS_AS(clopper_pearson(-1, 50, 0.98), std::invalid_argument);
  CHECK_THROWS_AS(clopper_pearson(51, 50, 0.98), std::invalid_argument);
  CHECK_THROWS_AS(clopper_pearson(5, 50, 1.0), std::invalid_argument);
}

TEST_CASE("clopper_pearson matches the tail-inversion oracle") {
  const auto [lower, upper] = clopper_pearson(380, 400, 0.98);
  CHECK(lower == doctest::Approx(cp_lower_oracle(380, 400, 0.98)).epsilon(1e-6));
  CHECK(upper == doctest::Approx(cp_upper_oracle(380, 400, 0.98)).epsilon(1e-6));

  Rng rng(11);
  for (int i = 0; i < 10; ++i) {
    const std::int64_t n = 20 + rng.below(400);
    const std::int64_t s = rng.below(n + 1);
    const double conf = 0.9 + 0.08 * rng.uniform();
    const auto [lo, hi] = clopper_pearson(s, n, conf);
    CHECK(std::abs(lo - cp_lower_oracle(s, n, conf)) < 1e-6);
    CHECK(std::abs(hi - cp_upper_oracle(s, n, conf)) < 1e-6);
    CHECK(lo <= static_cast<double>(s) / static_cast<double>(n) + 1e-12);
    CHECK(hi >= static_cast<double>(s) / static_cast<double>(n) - 1e-12);
  }
}

TEST_CASE("clopper_pearson lower bound is monotone and narrows with trials") {
  const double conf = 0.98;
  double prev = -1.0;
  for (std::int64_t s = 0; s <= 40; s += 4) {
    const double lo = clopper_pearson(s, 40, conf).first;
    CHECK(lo >= prev);
    prev = lo;
  }
  // Same empirical rate, more data: the interval tightens.
  const auto small = clopper_pearson(30, 40, conf);
  const auto large = clopper_pearson(300, 400, conf);
  CHECK(large.second - large.first < small.second - small.first);
}

TEST_CASE("epsilon lower bound inverts the precision bound") {
  CHECK(epsilon_lower_bound(0.5) == 0.0);
  CHECK(epsilon_lower_bound(0.2) == 0.0);  // clamped at zero
  const double e = std::exp(1.0);
  CHECK(epsilon_lower_bound(e / (1.0 + e)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(epsilon_lower_bound(0.63) ==
        doctest::Approx(std::log(0.63 / 0.37)).epsilon(1e-12));
  CHECK(epsilon_lower_bound(0.63) == doctest::Approx(0.532).epsilon(1e-2));
  CHECK(std::isinf(epsilon_lower_bound(1.0)));
  CHECK_THROWS_AS(epsilon_lower_bound(-0.1), std::invalid_argument);

  double prev = 0.0;
  for (double p = 0.5; p < 0.99; p += 0.05) {
    const double eps = epsilon_lower_bound(p);
    CHECK(eps >= prev);
    prev = eps;
  }
}

TEST_CASE("accountant: q=1 matches the analytic conversion within 10%") {
  const double sigma = 4.0;
  const double delta = 1e-5;
  const double ours = rdp_epsilon({sigma, 1, 1.0, delta});

  // Direct minimization oracle over a fine alpha grid.
  double oracle = std::numeric_limits<double>::infinity();
  for (double alpha = 1.001; alpha < 5000.0; alpha *= 1.0005) {
    oracle = std::min(oracle, alpha / (2.0 * sigma * sigma) +
                                  std::log(1.0 / delta) / (alpha - 1.0));
  }
  CHECK(ours == doctest::Approx(oracle).epsilon(0.10));
  CHECK(ours >= oracle - 1e-9);  // grid minimum cannot beat the true minimum
}

TEST_CASE("accountant: monotone in noise, steps and delta") {
  const AccountantInput base{2.0, 10, 0.5, 1e-5};
  const double eps = rdp_epsilon(base);

  AccountantInput noisier = base;
  noisier.noise_multiplier = 4.0;
  CHECK(rdp_epsilon(noisier) < eps);

  AccountantInput doubled = base;
  doubled.steps = 20;
  CHECK(rdp_epsilon(doubled) >= eps);

  // Epsilon decays toward zero as sigma grows.
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {1.0, 2.0, 8.0, 32.0, 128.0, 1024.0}) {
    const double value = rdp_epsilon({sigma, 1, 1.0, 1e-4});
    CHECK(value < prev);
    prev = value;
  }
  CHECK(prev < 0.01);

  CHECK(std::isinf(rdp_epsilon({0.0, 10, 0.5, 1e-5})));
  CHECK_THROWS_AS(rdp_epsilon({1.0, 0, 0.5, 1e-5}), std::invalid_argument);
  CHECK_THROWS_AS(rdp_epsilon({1.0, 10, 1.5, 1e-5}), std::invalid_argument);
  CHECK_THROWS_AS(rdp_epsilon({1.0, 10, 0.5, 0.0}), std::invalid_argument);
}

TEST_CASE("accountant: subsampling reduces epsilon") {
  const double full = rdp_epsilon({1.0, 10, 1.0, 1e-5});
  const double sampled = rdp_epsilon({1.0, 10, 0.05, 1e-5});
  CHECK(sampled < full);
  CHECK(sampled > 0.0);
}

TEST_CASE("run_audit: sound epsilons and sane bookkeeping on a tiny grid") {
  AuditConfig cfg;
  Rng rng(derive_seed(8, streams::kData));
  for (int k = 0; k < 4; ++k) {
    Eigen::VectorXd dir(10);
    for (int j = 0; j < 10; ++j) dir[j] = rng.normal();
    dir.normalize();
    cfg.classes.push_back({2.0 * dir, 1.0, 0});
  }
  cfg.arch = {10, {}, 4};
  cfg.initial = {0.01, 32, 10, 0};
  cfg.update = {UpdateKind::SGDNew, {0.05, 40, 5, 0}};
  cfg.n0 = 120;
  cfg.n_up = 40;
  cfg.clip_norm = 0.5;
  cfg.noise_grid = {0.5, 60.0};
  cfg.worlds = 4;
  cfg.challenges_per_world = 20;
  cfg.seed = 99;

  const auto results = run_audit(cfg);
  REQUIRE(results.size() == 2);
  for (const auto& r : results) {
    CHECK(r.sampling_rate == 1.0);  // full-batch update
    CHECK(r.steps == 5);
    CHECK(r.trials >= 0);
    CHECK(r.successes <= r.trials);
    CHECK(r.precision_lower <= r.precision + 1e-12);
    CHECK(r.epsilon_lower <= r.epsilon_provable);
  }
  // At sigma = 60 the provable epsilon is already tiny and the attack is
  // noise-bound, so the audited lower bound collapses to zero.
  CHECK(results[1].epsilon_provable < 0.3);
  CHECK(results[1].epsilon_lower == 0.0);

  const auto again = run_audit(cfg);
  CHECK(again[0].successes == results[0].successes);
  CHECK(again[0].trials == results[0].trials);
}
