#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "miup/attacks.hpp"
#include "miup/dataset.hpp"
#include "miup/train.hpp"

namespace miup {

// Accounting input for the (Poisson-subsampled) Gaussian mechanism.
struct AccountantInput {
  double noise_multiplier = 0.0;  // sigma
  int steps = 1;
  double sampling_rate = 1.0;  // q in (0, 1]
  double delta = 1e-4;
};

// Renyi-DP accounting minimized over an order grid and converted to
// (epsilon, delta). The result is an upper bound on the true epsilon:
// q = 1 uses the exact Gaussian-mechanism RDP alpha/(2 sigma^2) at every
// order; q < 1 evaluates the integer-order subsampled-Gaussian bound, so
// fractional grid orders are rounded up (RDP is non-decreasing in the
// order, which keeps the conversion valid). sigma = 0 returns infinity.
double rdp_epsilon(const AccountantInput& input);

// Exact (Clopper-Pearson) two-sided binomial confidence interval for the
// success rate, each tail holding (1 - confidence) / 2.
std::pair<double, double> clopper_pearson(std::int64_t successes, std::int64_t trials,
                                          double confidence);

// Inverts the precision bound p <= e^eps / (1 + e^eps):
// eps >= ln(p / (1 - p)), clamped at 0. p = 1 maps to infinity.
double epsilon_lower_bound(double precision_lower);

struct AuditResult {
  double noise_multiplier = 0.0;
  int steps = 0;
  double sampling_rate = 1.0;
  double delta = 1e-4;
  double epsilon_provable = 0.0;
  std::int64_t successes = 0;  // true positives among IN claims
  std::int64_t trials = 0;     // IN claims made by the attack
  double confidence = 0.98;
  double precision = 0.0;
  double precision_lower = 0.0;
  double epsilon_lower = 0.0;
};

// Single-update audit harness: per noise multiplier, trains worlds whose
// update runs DP-SGD, attacks them, and converts the Clopper-Pearson
// precision lower bound into an empirical epsilon lower bound.
struct AuditConfig {
  std::vector<GaussianClassSpec> classes;
  ArchDescriptor arch;
  TrainConfig initial;
  UpdateStrategy update;  // its config drives the DP-SGD step count
  int n0 = 0;
  int n_up = 0;
  double clip_norm = 0.5;
  double delta = 1e-4;
  std::vector<double> noise_grid;
  int worlds = 20;
  int challenges_per_world = 20;
  double confidence = 0.98;
  Combiner combiner{CombinerKind::Ratio, 1e-6};
  ThresholdMode threshold_mode = ThresholdMode::Precision;
  std::uint64_t seed = 0;
};

std::vector<AuditResult> run_audit(const AuditConfig& config);

}  // namespace miup
