#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "miup/rng.hpp"
#include "miup/train.hpp"

namespace miup {
namespace mean_lab {

// World parameters for the Gaussian mean-estimation experiments: points are
// drawn from N(mu, sigma^2 I_d), the initial release is the mean of n0
// points and the update adds n1 more.
struct MeanWorld {
  Eigen::VectorXd mu;
  double sigma = 1.0;
  int n0 = 0;
  int n1 = 0;
  int d = 0;
  std::uint64_t seed = 0;
};

// The two released means plus the update-set mean recovered from them.
struct MeanEstimates {
  Eigen::VectorXd mu0;    // mean of D_0
  Eigen::VectorXd mu1;    // mean of D_0 u D_1
  Eigen::VectorXd delta;  // (n/n1) mu1 - (n0/n1) mu0
};

// Arithmetic mean per coordinate over the rows of `points`.
Eigen::VectorXd sample_mean(const Eigen::MatrixXd& points);

// Recovers the mean of the update set from the two releases.
MeanEstimates recover_estimates(const Eigen::VectorXd& mu0, const Eigen::VectorXd& mu1,
                                int n0, int n1);

// Likelihood-ratio distinguisher on a released mean. Both densities are
// evaluated in log space:
//   log p_IN  = (d/2) log((n-1)/(2 pi s^2)) - (n-1)/(2 s^2) |mu_hat - (n-1)/n mu - v/n|^2
//   log p_OUT = (d/2) log(n/(2 pi s^2))     - n/(2 s^2)     |mu_hat - mu|^2
// Returns IN iff log p_IN > log p_OUT.
bool np_no_update(const Eigen::VectorXd& v, const Eigen::VectorXd& mu_hat,
                  const Eigen::VectorXd& mu, double sigma, int n);

// Same distinguisher applied to the recovered update mean with n = n1.
bool np_with_update(const Eigen::VectorXd& v, const MeanEstimates& estimates,
                    const Eigen::VectorXd& mu, double sigma, int n0, int n1);

// Dot-product attack: s = (mu_delta - mu) . (v - mu) against the threshold
// T = |v - mu|^2 / (2 n1); IN iff s >= T (ties resolve to IN).
bool dot_attack(const Eigen::VectorXd& v, const Eigen::VectorXd& mu_delta,
                const Eigen::VectorXd& mu, int n1);

// Upper bound on any no-update adversary:
//   1/2 + 1/2 (sqrt(5d/(n-1)) + sqrt(d)/(n-1)), capped at 1. Requires n >= 2.
double bound_no_update(int d, int n);

// Lower bound achieved by the dot-product attack:
//   Phi(sqrt(d / (80 (n1 - 1)))). Requires n1 >= 2.
double bound_update(int d, int n1);

enum class MeanLossKind { SquaredL2, L2 };

// One full-batch gradient step from f0 on the selected loss. SGDNew steps
// on d1 alone; SGDFull on the concatenation of d0 and d1 (f0 is expected
// to be the exact mean of d0 in that branch).
Eigen::VectorXd grad_step_mean(const Eigen::VectorXd& f0, const Eigen::MatrixXd& d1,
                               const Eigen::MatrixXd& d0, double eta,
                               UpdateKind strategy, MeanLossKind loss);

// Loss values used by the closed-form checks.
double mean_loss_sq(const Eigen::VectorXd& f, const Eigen::VectorXd& x);  // |f-x|^2
double mean_loss_l2(const Eigen::VectorXd& f, const Eigen::VectorXd& x);  // |f-x|

// Draws an n x d matrix of N(mu, sigma^2 I) rows.
Eigen::MatrixXd gaussian_matrix(const Eigen::VectorXd& mu, double sigma, int n, Rng& rng);

struct MeanAccuracyRow {
  int n1 = 0;
  std::string attack;
  int trials = 0;
  double accuracy = 0.0;
  double stderr_ = 0.0;
};

// Balanced IN/OUT challenges against both distinguishers across the n1
// grid; one row per (n1, attack).
std::vector<MeanAccuracyRow> run_mean_experiment(const MeanWorld& base,
                                                 const std::vector<int>& n1_grid,
                                                 int trials);

// CSV with columns n1,attack,trials,accuracy,stderr.
std::string mean_rows_to_csv(const std::vector<MeanAccuracyRow>& rows);

// Monte-Carlo accuracy of np_no_update alone (mean of all n points).
double measure_np_no_update_accuracy(int d, int n, double sigma, int trials,
                                     std::uint64_t seed);

// Monte-Carlo accuracy of the dot-product attack with the update mean
// recovered from the two releases.
double measure_dot_attack_accuracy(int d, int n0, int n1, double sigma, int trials,
                                   std::uint64_t seed);

// Loss-difference attack on one-gradient-step mean updates. Per trial the
// threshold is the midpoint of the empirical means of the update points'
// and fresh points' loss differences; returns the challenge accuracy.
double scorediff_theorem_check(int d, int n1, int n0, double eta, double sigma,
                               int trials, std::uint64_t seed);

}  // namespace mean_lab
}  // namespace miup
