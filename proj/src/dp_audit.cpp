#include "miup/dp_audit.hpp"

#include <algorithm>
#include <boost/math/distributions/beta.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "miup/scores.hpp"
#include "miup/stats.hpp"

namespace miup {

namespace {

// Base grid 1.25, 1.5, ..., 64 plus doubling orders so that epsilon keeps
// shrinking toward 0 as sigma grows.
std::vector<double> order_grid() {
  std::vector<double> orders;
  for (double a = 1.25; a <= 64.0 + 1e-12; a += 0.25) orders.push_back(a);
  for (double a = 128.0; a <= 1048576.0; a *= 2.0) orders.push_back(a);
  return orders;
}

// log E[(1-q + q e^{Z})^alpha]-style integer-order bound for the
// Poisson-subsampled Gaussian mechanism:
//   RDP(alpha) <= 1/(alpha-1) log sum_k C(alpha,k)(1-q)^{alpha-k} q^k
//                 exp(k(k-1)/(2 sigma^2))
double subsampled_rdp_integer(std::int64_t alpha, double q, double sigma) {
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(alpha) + 1);
  for (std::int64_t k = 0; k <= alpha; ++k) {
    const double log_term =
        log_binomial_coeff(alpha, k) +
        static_cast<double>(alpha - k) * std::log1p(-q) +
        static_cast<double>(k) * std::log(q) +
        static_cast<double>(k) * static_cast<double>(k - 1) / (2.0 * sigma * sigma);
    terms.push_back(log_term);
    max_term = std::max(max_term, log_term);
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - max_term);
  const double log_moment = max_term + std::log(sum);
  return log_moment / (static_cast<double>(alpha) - 1.0);
}

}  // namespace

double rdp_epsilon(const AccountantInput& input) {
  if (input.noise_multiplier < 0.0) {
    throw std::invalid_argument("accountant: noise multiplier must be >= 0");
  }
  if (input.steps < 1) throw std::invalid_argument("accountant: steps must be >= 1");
  if (!(input.sampling_rate > 0.0 && input.sampling_rate <= 1.0)) {
    throw std::invalid_argument("accountant: sampling rate must lie in (0,1]");
  }
  if (!(input.delta > 0.0 && input.delta < 1.0)) {
    throw std::invalid_argument("accountant: delta must lie in (0,1)");
  }
  if (input.noise_multiplier == 0.0) {
    return std::numeric_limits<double>::infinity();
  }

  const double sigma = input.noise_multiplier;
  const double q = input.sampling_rate;
  const double log_inv_delta = std::log(1.0 / input.delta);
  double best = std::numeric_limits<double>::infinity();
  for (double alpha : order_grid()) {
    double order = alpha;
    double rdp = 0.0;
    if (q >= 1.0) {
      rdp = order / (2.0 * sigma * sigma);
    } else {
      // Integer-order bound; fractional orders round up, and the rounded
      // order is used in the conversion too so the pair stays valid.
      const auto alpha_int = static_cast<std::int64_t>(std::ceil(alpha));
      if (alpha_int < 2) continue;
      order = static_cast<double>(alpha_int);
      rdp = subsampled_rdp_integer(alpha_int, q, sigma);
    }
    const double eps = static_cast<double>(input.steps) * rdp +
                       log_inv_delta / (order - 1.0);
    best = std::min(best, eps);
  }
  return best;
}

std::pair<double, double> clopper_pearson(std::int64_t successes, std::int64_t trials,
                                          double confidence) {
  if (trials < 1 || successes < 0 || successes > trials) {
    throw std::invalid_argument("clopper_pearson: need 0 <= successes <= trials");
  }
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw std::invalid_argument("clopper_pearson: confidence must lie in (0,1)");
  }
  const double tail = (1.0 - confidence) / 2.0;
  const auto s = static_cast<double>(successes);
  const auto n = static_cast<double>(trials);
  double lower = 0.0;
  double upper = 1.0;
  if (successes > 0) {
    boost::math::beta_distribution<double> lo(s, n - s + 1.0);
    lower = boost::math::quantile(lo, tail);
  }
  if (successes < trials) {
    boost::math::beta_distribution<double> hi(s + 1.0, n - s);
    upper = boost::math::quantile(hi, 1.0 - tail);
  }
  return {lower, upper};
}

double epsilon_lower_bound(double precision_lower) {
  if (precision_lower < 0.0 || precision_lower > 1.0) {
    throw std::invalid_argument("epsilon_lower_bound: precision outside [0,1]");
  }
  if (precision_lower == 1.0) return std::numeric_limits<double>::infinity();
  return std::max(0.0, std::log(precision_lower / (1.0 - precision_lower)));
}

std::vector<AuditResult> run_audit(const AuditConfig& config) {
  if (config.noise_grid.empty()) {
    throw std::invalid_argument("run_audit: empty noise grid");
  }
  const GaussianClassSampler sampler(config.classes);
  const LossScorer scorer;

  std::vector<AuditResult> results;
  for (std::size_t g = 0; g < config.noise_grid.size(); ++g) {
    const double sigma = config.noise_grid[g];
    DPConfig dp{config.clip_norm, sigma, config.delta};

    const int train_size = config.update.kind == UpdateKind::SGDNew
                               ? config.n_up
                               : config.n0 + config.n_up;
    const int batch = std::min(config.update.config.batch_size, train_size);
    const int steps_per_epoch = (train_size + batch - 1) / batch;
    const int steps = steps_per_epoch * config.update.config.epochs;
    const double q = static_cast<double>(batch) / static_cast<double>(train_size);

    AuditResult result;
    result.noise_multiplier = sigma;
    result.steps = steps;
    result.sampling_rate = q;
    result.delta = config.delta;
    result.confidence = config.confidence;
    result.epsilon_provable =
        sigma > 0.0 ? rdp_epsilon({sigma, steps, q, config.delta})
                    : std::numeric_limits<double>::infinity();

    for (int w = 0; w < config.worlds; ++w) {
      const std::uint64_t world_seed =
          derive_seed(config.seed, streams::kWorld,
                      static_cast<std::uint64_t>(g) * 100000ULL +
                          static_cast<std::uint64_t>(w));
      Dataset d0 = sample_dataset(sampler, config.n0,
                                  derive_seed(world_seed, streams::kData, 0), "d0");
      Dataset d1 = sample_dataset(sampler, config.n_up,
                                  derive_seed(world_seed, streams::kData, 1), "d1");

      TrainConfig initial = config.initial;
      initial.seed = derive_seed(world_seed, streams::kInit);
      const Model f0 = train_initial(config.arch, initial, d0);

      TrainConfig update_config = config.update.config;
      update_config.seed = derive_seed(world_seed, streams::kEpoch);
      Dataset train_set = config.update.kind == UpdateKind::SGDNew
                              ? d1
                              : concat(d0, d1);
      const Model f1 = dp_train(f0, train_set, update_config, dp);

      // Batch threshold from the update points plus an equal fresh draw.
      Dataset fresh = sample_dataset(sampler, config.n_up,
                                     derive_seed(world_seed, streams::kBatchCal),
                                     "fresh");
      std::vector<double> combined;
      for (Eigen::Index i = 0; i < d1.size(); ++i) {
        const Eigen::VectorXd x = d1.features.row(i).transpose();
        const int y = d1.labels[static_cast<std::size_t>(i)];
        combined.push_back(config.combiner.combine(scorer.score(x, y, f0),
                                                   scorer.score(x, y, f1)));
      }
      for (Eigen::Index i = 0; i < fresh.size(); ++i) {
        const Eigen::VectorXd x = fresh.features.row(i).transpose();
        const int y = fresh.labels[static_cast<std::size_t>(i)];
        combined.push_back(config.combiner.combine(scorer.score(x, y, f0),
                                                   scorer.score(x, y, f1)));
      }
      const double threshold = calibrate_batch(combined, config.threshold_mode);

      Rng challenge_rng(derive_seed(world_seed, streams::kTrial));
      for (int c = 0; c < config.challenges_per_world; ++c) {
        const bool in = challenge_rng.bernoulli(0.5);
        Eigen::VectorXd x;
        int y = 0;
        if (in) {
          const auto row = static_cast<Eigen::Index>(challenge_rng.below(d1.size()));
          x = d1.features.row(row).transpose();
          y = d1.labels[static_cast<std::size_t>(row)];
        } else {
          Rng point_rng(derive_seed(world_seed, streams::kTrial,
                                    1000 + static_cast<std::uint64_t>(c)));
          const LabeledPoint p = sampler.sample(point_rng);
          x = p.x;
          y = p.y;
        }
        const double value = config.combiner.combine(scorer.score(x, y, f0),
                                                     scorer.score(x, y, f1));
        if (decide_in(value, threshold)) {
          result.trials += 1;
          if (in) result.successes += 1;
        }
      }
    }

    if (result.trials > 0) {
      result.precision = static_cast<double>(result.successes) /
                         static_cast<double>(result.trials);
      result.precision_lower =
          clopper_pearson(result.successes, result.trials, config.confidence).first;
    }
    result.epsilon_lower = epsilon_lower_bound(result.precision_lower);
    results.push_back(result);
  }
  return results;
}

}  // namespace miup
