#include "miup/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "miup/stats.hpp"

namespace miup {

double combine_diff(double s0, double s1) { return s1 - s0; }

double combine_ratio(double s0, double s1, double damping) {
  if (!(damping > 0.0)) {
    throw std::invalid_argument("score_ratio: damping constant must be > 0");
  }
  return (s1 + damping) / (s0 + damping);
}

double Combiner::combine(double s0, double s1) const {
  return kind == CombinerKind::Diff ? combine_diff(s0, s1)
                                    : combine_ratio(s0, s1, damping);
}

double score_diff(const Eigen::VectorXd& x, int y, const Model& f0, const Model& f1,
                  const Scorer& score) {
  return combine_diff(score.score(x, y, f0), score.score(x, y, f1));
}

double score_ratio(const Eigen::VectorXd& x, int y, const Model& f0, const Model& f1,
                   const Scorer& score, double damping) {
  return combine_ratio(score.score(x, y, f0), score.score(x, y, f1), damping);
}

double calibrate_batch(const std::vector<double>& combined_scores, ThresholdMode mode) {
  if (combined_scores.empty()) {
    throw std::invalid_argument("calibrate_batch: empty score list");
  }
  return quantile_type7(combined_scores, mode == ThresholdMode::Accuracy ? 0.5 : 0.1);
}

double calibrate_rank(const std::vector<double>& out_scores, double q) {
  if (out_scores.empty()) throw std::invalid_argument("calibrate_rank: empty score list");
  if (!(q > 0.0 && q < 1.0)) {
    throw std::invalid_argument("calibrate_rank: q must lie in (0,1)");
  }
  return quantile_type7(out_scores, q);
}

double calibrate_transfer(const ShadowSet& shadows, const Combiner& combiner,
                          const Scorer& score, ThresholdMode mode, int shadow_index) {
  if (shadow_index < 0 || shadow_index >= shadows.size()) {
    throw std::invalid_argument("calibrate_transfer: missing shadow pair");
  }
  const Shadow& shadow = shadows.shadows[static_cast<std::size_t>(shadow_index)];
  std::vector<double> combined;
  combined.reserve(static_cast<std::size_t>(shadows.pool.size()));
  for (Eigen::Index i = 0; i < shadows.pool.size(); ++i) {
    const Eigen::VectorXd x = shadows.pool.features.row(i).transpose();
    const int y = shadows.pool.labels[static_cast<std::size_t>(i)];
    combined.push_back(combiner.combine(score.score(x, y, shadow.pre),
                                        score.score(x, y, shadow.post)));
  }
  return calibrate_batch(combined, mode);
}

bool decide_in(double combined, double threshold) { return combined < threshold; }

bool back_front(const Eigen::VectorXd& x, int y, const UpdateTrace& trace,
                const Combiner& combiner, const Scorer& score, double threshold) {
  if (trace.k() < 1) throw std::invalid_argument("back_front: trace has no updates");
  const double s0 = score.score(x, y, trace.front());
  const double sk = score.score(x, y, trace.back());
  return decide_in(combiner.combine(s0, sk), threshold);
}

std::vector<double> delta_thresholds(const std::vector<std::vector<double>>& pair_scores,
                                     int k, int n_up) {
  if (static_cast<int>(pair_scores.size()) != k) {
    throw std::invalid_argument("delta_thresholds: need one score list per update");
  }
  if (n_up < 1) throw std::invalid_argument("delta_thresholds: n_up must be >= 1");

  const std::size_t n_points = pair_scores.front().size();
  std::vector<std::uint8_t> assigned(n_points, 0);
  std::vector<double> thresholds;
  thresholds.reserve(static_cast<std::size_t>(k));

  for (int i = 0; i < k; ++i) {
    if (pair_scores[static_cast<std::size_t>(i)].size() != n_points) {
      throw std::invalid_argument("delta_thresholds: ragged score lists");
    }
    std::vector<std::pair<double, std::size_t>> remaining;
    for (std::size_t j = 0; j < n_points; ++j) {
      if (!assigned[j]) {
        remaining.emplace_back(pair_scores[static_cast<std::size_t>(i)][j], j);
      }
    }
    if (remaining.size() < static_cast<std::size_t>(n_up) + 1) {
      throw std::invalid_argument("delta_thresholds: insufficient calibration points");
    }
    std::sort(remaining.begin(), remaining.end());
    // Midpoint between the n_up-th and (n_up+1)-th smallest unassigned
    // scores; with the strict < rule exactly n_up points fall below.
    const double lo = remaining[static_cast<std::size_t>(n_up) - 1].first;
    const double hi = remaining[static_cast<std::size_t>(n_up)].first;
    thresholds.push_back(0.5 * (lo + hi));
    for (int j = 0; j < n_up; ++j) {
      assigned[remaining[static_cast<std::size_t>(j)].second] = 1;
    }
  }
  return thresholds;
}

MultiUpdateDecision delta_attack(const Eigen::VectorXd& x, int y,
                                 const UpdateTrace& trace, const Combiner& combiner,
                                 const Scorer& score,
                                 const std::vector<double>& thresholds) {
  if (static_cast<int>(thresholds.size()) != trace.k()) {
    throw std::invalid_argument("delta_attack: threshold/trace length mismatch");
  }
  for (int i = 1; i <= trace.k(); ++i) {
    const double s_prev =
        score.score(x, y, trace.models[static_cast<std::size_t>(i - 1)]);
    const double s_curr = score.score(x, y, trace.models[static_cast<std::size_t>(i)]);
    if (decide_in(combiner.combine(s_prev, s_curr),
                  thresholds[static_cast<std::size_t>(i - 1)])) {
      return {true, i};
    }
  }
  return {false, 0};
}

void validate_zero_one_table(const ZeroOneTable& table) {
  double update_sum = 0.0;
  double test_sum = 0.0;
  for (int c = 0; c < 4; ++c) {
    if (table.update[static_cast<std::size_t>(c)] < 0.0 ||
        table.test[static_cast<std::size_t>(c)] < 0.0) {
      throw std::invalid_argument("zero-one table: negative cell mass");
    }
    update_sum += table.update[static_cast<std::size_t>(c)];
    test_sum += table.test[static_cast<std::size_t>(c)];
  }
  if (std::abs(update_sum - 1.0) > 1e-9 || std::abs(test_sum - 1.0) > 1e-9) {
    throw std::invalid_argument("zero-one table: cell families must sum to 1");
  }
}

ZeroOneAttack optimal_01_attack(const ZeroOneTable& table, bool with_updates) {
  validate_zero_one_table(table);
  // Cells: 0 = (f0 correct, f1 correct), 1 = (f0 correct, f1 incorrect),
  //        2 = (f0 incorrect, f1 correct), 3 = (f0 incorrect, f1 incorrect).
  // Without updates the verdict may depend only on f1, i.e. cells {0,2}
  // share a decision and so do {1,3}. Both searches walk the same
  // 16-strategy space with identical arithmetic so that equal optima are
  // bit-identical; the restricted search merely skips inadmissible masks.
  ZeroOneAttack best;
  best.accuracy = -1.0;
  for (int mask = 0; mask < 16; ++mask) {
    std::array<bool, 4> rule{};
    for (int c = 0; c < 4; ++c) rule[static_cast<std::size_t>(c)] = (mask >> c) & 1;
    if (!with_updates && (rule[0] != rule[2] || rule[1] != rule[3])) continue;
    double acc = 0.0;
    for (int c = 0; c < 4; ++c) {
      acc += rule[static_cast<std::size_t>(c)] ? table.update[static_cast<std::size_t>(c)]
                                               : table.test[static_cast<std::size_t>(c)];
    }
    acc *= 0.5;
    if (acc > best.accuracy) {
      best.accuracy = acc;
      best.decide_in = rule;
    }
  }
  return best;
}

ZeroOneTable sample_assumption_table(Rng& rng) {
  // The two assumptions: (1) the initial model performs equally on update
  // and test points; (2) the updated model performs strictly better on
  // update points within both f0 cells. Cellwise that also forces the
  // f1-incorrect masses below their test counterparts, which the sampler
  // re-checks on the realized doubles.
  for (;;) {
    ZeroOneTable t;
    double u[4];
    double total = 0.0;
    for (double& v : u) {
      v = -std::log(rng.uniform());
      total += v;
    }
    for (int c = 0; c < 4; ++c) t.update[static_cast<std::size_t>(c)] = u[c] / total;

    const double f0_correct = t.update[0] + t.update[1];
    const double split_correct = rng.uniform();
    const double split_incorrect = rng.uniform();
    t.test[0] = f0_correct * split_correct;
    t.test[1] = f0_correct - t.test[0];
    const double f0_incorrect = 1.0 - f0_correct;
    t.test[2] = f0_incorrect * split_incorrect;
    t.test[3] = f0_incorrect - t.test[2];

    const bool ok = t.update[0] > t.test[0] && t.update[2] > t.test[2] &&
                    t.update[1] < t.test[1] && t.update[3] < t.test[3];
    if (ok) return t;
  }
}

}  // namespace miup
