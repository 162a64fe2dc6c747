#include "miup/mean_lab.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "miup/stats.hpp"

namespace miup {
namespace mean_lab {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double log_density_in(const Eigen::VectorXd& v, const Eigen::VectorXd& mu_hat,
                      const Eigen::VectorXd& mu, double sigma, int n) {
  const double d = static_cast<double>(mu.size());
  const double nn = static_cast<double>(n);
  const Eigen::VectorXd center = ((nn - 1.0) / nn) * mu + v / nn;
  return 0.5 * d * std::log((nn - 1.0) / (kTwoPi * sigma * sigma)) -
         (nn - 1.0) / (2.0 * sigma * sigma) * (mu_hat - center).squaredNorm();
}

double log_density_out(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu,
                       double sigma, int n) {
  const double d = static_cast<double>(mu.size());
  const double nn = static_cast<double>(n);
  return 0.5 * d * std::log(nn / (kTwoPi * sigma * sigma)) -
         nn / (2.0 * sigma * sigma) * (mu_hat - mu).squaredNorm();
}

struct Challenge {
  Eigen::VectorXd v;
  bool in = false;
  MeanEstimates estimates;
};

// Builds one world: draws D0 and D1, placing the challenge point inside D1
// for IN trials, and computes both released means.
Challenge draw_challenge(const MeanWorld& world, std::uint64_t trial_seed) {
  Rng rng(trial_seed);
  Challenge ch;
  ch.in = rng.bernoulli(0.5);
  ch.v = world.mu;
  for (Eigen::Index j = 0; j < ch.v.size(); ++j) ch.v[j] += world.sigma * rng.normal();

  Eigen::MatrixXd d0 = gaussian_matrix(world.mu, world.sigma, world.n0, rng);
  Eigen::MatrixXd d1 = gaussian_matrix(world.mu, world.sigma, world.n1, rng);
  if (ch.in) d1.row(0) = ch.v.transpose();

  const Eigen::VectorXd mu0 = world.n0 > 0 ? sample_mean(d0).eval() : world.mu;
  Eigen::MatrixXd all(world.n0 + world.n1, world.d);
  if (world.n0 > 0) all.topRows(world.n0) = d0;
  all.bottomRows(world.n1) = d1;
  const Eigen::VectorXd mu1 = sample_mean(all);
  ch.estimates = recover_estimates(mu0, mu1, world.n0, world.n1);
  return ch;
}

}  // namespace

Eigen::VectorXd sample_mean(const Eigen::MatrixXd& points) {
  if (points.rows() == 0) throw std::invalid_argument("sample_mean: empty set");
  return points.colwise().mean().transpose();
}

MeanEstimates recover_estimates(const Eigen::VectorXd& mu0, const Eigen::VectorXd& mu1,
                                int n0, int n1) {
  if (n1 < 1) throw std::invalid_argument("recover_estimates: n1 must be >= 1");
  MeanEstimates est;
  est.mu0 = mu0;
  est.mu1 = mu1;
  const double n = static_cast<double>(n0 + n1);
  est.delta = (n / static_cast<double>(n1)) * mu1 -
              (static_cast<double>(n0) / static_cast<double>(n1)) * mu0;
  return est;
}

bool np_no_update(const Eigen::VectorXd& v, const Eigen::VectorXd& mu_hat,
                  const Eigen::VectorXd& mu, double sigma, int n) {
  if (!(sigma > 0.0)) throw std::invalid_argument("np_no_update: sigma must be > 0");
  if (v.size() != mu.size() || mu_hat.size() != mu.size()) {
    throw std::invalid_argument("np_no_update: dimension mismatch");
  }
  return log_density_in(v, mu_hat, mu, sigma, n) > log_density_out(mu_hat, mu, sigma, n);
}

bool np_with_update(const Eigen::VectorXd& v, const MeanEstimates& estimates,
                    const Eigen::VectorXd& mu, double sigma, int n0, int n1) {
  if (n1 < 1) throw std::invalid_argument("np_with_update: n1 must be >= 1");
  (void)n0;
  return np_no_update(v, estimates.delta, mu, sigma, n1);
}

bool dot_attack(const Eigen::VectorXd& v, const Eigen::VectorXd& mu_delta,
                const Eigen::VectorXd& mu, int n1) {
  if (n1 < 1) throw std::invalid_argument("dot_attack: n1 must be >= 1");
  if (v.size() != mu.size() || mu_delta.size() != mu.size()) {
    throw std::invalid_argument("dot_attack: dimension mismatch");
  }
  const double s = (mu_delta - mu).dot(v - mu);
  const double threshold = (v - mu).squaredNorm() / (2.0 * static_cast<double>(n1));
  return s >= threshold;
}

double bound_no_update(int d, int n) {
  if (n < 2) throw std::invalid_argument("bound_no_update: n must be >= 2");
  const double dd = static_cast<double>(d);
  const double nn = static_cast<double>(n);
  const double bound =
      0.5 + 0.5 * (std::sqrt(5.0 * dd / (nn - 1.0)) + std::sqrt(dd) / (nn - 1.0));
  return std::min(bound, 1.0);
}

double bound_update(int d, int n1) {
  if (n1 < 2) throw std::invalid_argument("bound_update: n1 must be >= 2");
  return normal_cdf(std::sqrt(static_cast<double>(d) /
                              (80.0 * (static_cast<double>(n1) - 1.0))));
}

Eigen::VectorXd grad_step_mean(const Eigen::VectorXd& f0, const Eigen::MatrixXd& d1,
                               const Eigen::MatrixXd& d0, double eta,
                               UpdateKind strategy, MeanLossKind loss) {
  if (d1.rows() == 0) throw std::invalid_argument("grad_step_mean: empty update set");
  Eigen::MatrixXd step_set;
  if (strategy == UpdateKind::SGDNew) {
    step_set = d1;
  } else {
    step_set.resize(d0.rows() + d1.rows(), d1.cols());
    step_set.topRows(d0.rows()) = d0;
    step_set.bottomRows(d1.rows()) = d1;
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(f0.size());
  if (loss == MeanLossKind::SquaredL2) {
    grad = 2.0 * (f0 - sample_mean(step_set));
  } else {
    for (Eigen::Index i = 0; i < step_set.rows(); ++i) {
      const Eigen::VectorXd diff = f0 - step_set.row(i).transpose();
      const double norm = diff.norm();
      if (norm > 0.0) grad += diff / norm;
    }
    grad /= static_cast<double>(step_set.rows());
  }
  return f0 - eta * grad;
}

double mean_loss_sq(const Eigen::VectorXd& f, const Eigen::VectorXd& x) {
  return (f - x).squaredNorm();
}

double mean_loss_l2(const Eigen::VectorXd& f, const Eigen::VectorXd& x) {
  return (f - x).norm();
}

Eigen::MatrixXd gaussian_matrix(const Eigen::VectorXd& mu, double sigma, int n,
                                Rng& rng) {
  Eigen::MatrixXd out(n, mu.size());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      out(i, j) = mu[j] + sigma * rng.normal();
    }
  }
  return out;
}

std::vector<MeanAccuracyRow> run_mean_experiment(const MeanWorld& base,
                                                 const std::vector<int>& n1_grid,
                                                 int trials) {
  if (trials < 1) throw std::invalid_argument("run_mean_experiment: trials must be >= 1");
  std::vector<MeanAccuracyRow> rows;
  for (std::size_t g = 0; g < n1_grid.size(); ++g) {
    MeanWorld world = base;
    world.n1 = n1_grid[g];
    int correct_no_update = 0;
    int correct_with_update = 0;
    for (int t = 0; t < trials; ++t) {
      const Challenge ch = draw_challenge(
          world, derive_seed(base.seed, streams::kTrial,
                             static_cast<std::uint64_t>(g) * 1000003ULL +
                                 static_cast<std::uint64_t>(t)));
      const bool guess_plain = np_no_update(ch.v, ch.estimates.mu1, world.mu,
                                            world.sigma, world.n0 + world.n1);
      const bool guess_update = np_with_update(ch.v, ch.estimates, world.mu,
                                               world.sigma, world.n0, world.n1);
      if (guess_plain == ch.in) ++correct_no_update;
      if (guess_update == ch.in) ++correct_with_update;
    }
    const double acc_plain = static_cast<double>(correct_no_update) / trials;
    const double acc_update = static_cast<double>(correct_with_update) / trials;
    rows.push_back({world.n1, "np_no_update", trials, acc_plain,
                    binomial_stderr(acc_plain, static_cast<std::size_t>(trials))});
    rows.push_back({world.n1, "np_with_update", trials, acc_update,
                    binomial_stderr(acc_update, static_cast<std::size_t>(trials))});
  }
  return rows;
}

std::string mean_rows_to_csv(const std::vector<MeanAccuracyRow>& rows) {
  std::ostringstream out;
  out << "n1,attack,trials,accuracy,stderr\n";
  out.precision(12);
  for (const auto& row : rows) {
    out << row.n1 << "," << row.attack << "," << row.trials << "," << row.accuracy
        << "," << row.stderr_ << "\n";
  }
  return out.str();
}

double measure_np_no_update_accuracy(int d, int n, double sigma, int trials,
                                     std::uint64_t seed) {
  MeanWorld world;
  world.mu = Eigen::VectorXd::Zero(d);
  world.sigma = sigma;
  world.n0 = 0;
  world.n1 = n;
  world.d = d;
  world.seed = seed;
  int correct = 0;
  for (int t = 0; t < trials; ++t) {
    const Challenge ch =
        draw_challenge(world, derive_seed(seed, streams::kTrial,
                                          static_cast<std::uint64_t>(t)));
    const bool guess = np_no_update(ch.v, ch.estimates.mu1, world.mu, sigma, n);
    if (guess == ch.in) ++correct;
  }
  return static_cast<double>(correct) / trials;
}

double measure_dot_attack_accuracy(int d, int n0, int n1, double sigma, int trials,
                                   std::uint64_t seed) {
  MeanWorld world;
  world.mu = Eigen::VectorXd::Zero(d);
  world.sigma = sigma;
  world.n0 = n0;
  world.n1 = n1;
  world.d = d;
  world.seed = seed;
  int correct = 0;
  for (int t = 0; t < trials; ++t) {
    const Challenge ch =
        draw_challenge(world, derive_seed(seed, streams::kTrial,
                                          static_cast<std::uint64_t>(t)));
    const bool guess = dot_attack(ch.v, ch.estimates.delta, world.mu, n1);
    if (guess == ch.in) ++correct;
  }
  return static_cast<double>(correct) / trials;
}

double scorediff_theorem_check(int d, int n1, int n0, double eta, double sigma,
                               int trials, std::uint64_t seed) {
  if (d < 1 || n1 < 1 || n0 < 1) {
    throw std::invalid_argument("scorediff_theorem_check: d, n1, n0 must be positive");
  }
  const Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
  int correct = 0;
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, streams::kTrial, static_cast<std::uint64_t>(t)));
    const bool in = rng.bernoulli(0.5);
    Eigen::VectorXd v(d);
    for (Eigen::Index j = 0; j < d; ++j) v[j] = sigma * rng.normal();

    const Eigen::MatrixXd d0 = gaussian_matrix(mu, sigma, n0, rng);
    Eigen::MatrixXd d1 = gaussian_matrix(mu, sigma, n1, rng);
    if (in) d1.row(0) = v.transpose();

    const Eigen::VectorXd f0 = sample_mean(d0);
    const Eigen::VectorXd f1 =
        grad_step_mean(f0, d1, d0, eta, UpdateKind::SGDNew, MeanLossKind::SquaredL2);

    auto diff = [&](const Eigen::VectorXd& x) {
      return mean_loss_sq(f1, x) - mean_loss_sq(f0, x);
    };

    // Calibration statistics: the update points are the IN sample, an
    // equally sized fresh draw is the OUT sample; the threshold sits at the
    // midpoint of the two empirical means.
    double in_mean = 0.0;
    for (Eigen::Index i = 0; i < d1.rows(); ++i) in_mean += diff(d1.row(i).transpose());
    in_mean /= static_cast<double>(d1.rows());
    const Eigen::MatrixXd fresh = gaussian_matrix(mu, sigma, n1, rng);
    double out_mean = 0.0;
    for (Eigen::Index i = 0; i < fresh.rows(); ++i) {
      out_mean += diff(fresh.row(i).transpose());
    }
    out_mean /= static_cast<double>(fresh.rows());
    const double threshold = 0.5 * (in_mean + out_mean);

    const bool guess = diff(v) < threshold;
    if (guess == in) ++correct;
  }
  return static_cast<double>(correct) / trials;
}

}  // namespace mean_lab
}  // namespace miup
