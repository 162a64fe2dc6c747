#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "miup/scores.hpp"
#include "miup/train.hpp"

namespace miup {

// Score combiners mapping (score on f0, score on f1) to one scalar.
enum class CombinerKind { Diff, Ratio };

struct Combiner {
  CombinerKind kind = CombinerKind::Diff;
  double damping = 1e-6;  // Ratio only; must be > 0

  double combine(double s0, double s1) const;
};

// s1 - s0.
double combine_diff(double s0, double s1);
// (s1 + c) / (s0 + c), c > 0.
double combine_ratio(double s0, double s1, double damping);

double score_diff(const Eigen::VectorXd& x, int y, const Model& f0, const Model& f1,
                  const Scorer& score);
double score_ratio(const Eigen::VectorXd& x, int y, const Model& f0, const Model& f1,
                   const Scorer& score, double damping);

enum class ThresholdMode { Accuracy, Precision };

// Batch strategy: median of the mixed IN/OUT combined scores for accuracy,
// 10th percentile for precision.
double calibrate_batch(const std::vector<double>& combined_scores, ThresholdMode mode);

// Rank strategy: q-quantile of OUT-only combined scores.
double calibrate_rank(const std::vector<double>& out_scores, double q);

// Transfer strategy: Batch calibration on one shadow (pre, post) pair's
// combined pool scores, transferred to the target models.
double calibrate_transfer(const ShadowSet& shadows, const Combiner& combiner,
                          const Scorer& score, ThresholdMode mode,
                          int shadow_index = 0);

// IN iff combined < T; ties resolve to OUT.
bool decide_in(double combined, double threshold);

// Back-Front: single decision from the first and last model of the trace.
bool back_front(const Eigen::VectorXd& x, int y, const UpdateTrace& trace,
                const Combiner& combiner, const Scorer& score, double threshold);

// Sequential Delta calibration: T_i is set so that exactly n_up
// not-yet-assigned calibration points fall strictly below it; assigned
// points drop out of later pairs. pair_scores[i-1][j] is the combined
// score of calibration point j on (f_{i-1}, f_i).
std::vector<double> delta_thresholds(const std::vector<std::vector<double>>& pair_scores,
                                     int k, int n_up);

struct MultiUpdateDecision {
  bool in = false;
  int epoch = 0;  // in [1, k], meaningful only when in == true
};

// Scans consecutive model pairs in ascending order and returns the first
// epoch whose combined score falls below its threshold.
MultiUpdateDecision delta_attack(const Eigen::VectorXd& x, int y,
                                 const UpdateTrace& trace, const Combiner& combiner,
                                 const Scorer& score,
                                 const std::vector<double>& thresholds);

// 0/1-loss frequency table over (f0 correct?, f1 correct?) cells for update
// and test points. Cell order: 11, 10, 01, 00 (f0 status first).
struct ZeroOneTable {
  std::array<double, 4> update{};  // p^u_{11}, p^u_{10}, p^u_{01}, p^u_{00}
  std::array<double, 4> test{};    // p^t_{11}, p^t_{10}, p^t_{01}, p^t_{00}
};

void validate_zero_one_table(const ZeroOneTable& table);

struct ZeroOneAttack {
  // decide_in[cell]: verdict for points landing in that (f0, f1) cell.
  // Without updates the map is constant across the f0 status.
  std::array<bool, 4> decide_in{};
  double accuracy = 0.0;
};

// Brute-force best decision rule over the table cells. `with_updates`
// grants a separate decision per (f0, f1) cell; otherwise the decision may
// depend only on f1's status. Both searches enumerate the same strategy
// space with identical arithmetic, so equal optima compare equal exactly.
ZeroOneAttack optimal_01_attack(const ZeroOneTable& table, bool with_updates);

// Rejection-samples a table satisfying the equal-f0-performance and
// better-f1-on-updates assumptions (used by the theory checks).
ZeroOneTable sample_assumption_table(Rng& rng);

}  // namespace miup
