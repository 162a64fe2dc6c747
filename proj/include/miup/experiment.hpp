#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "miup/attacks.hpp"
#include "miup/dataset.hpp"
#include "miup/scores.hpp"
#include "miup/train.hpp"

namespace miup {

enum class Instantiation { SingleUpdate, MultiUpdate, Shift };

enum class AttackFamily { BackFront, Delta, BaselineGap, BaselineLoss, BaselineLira };

enum class ScoreKind { Loss, Lira };

enum class ThresholdStrategyKind { Batch, Transfer, Rank };

// One configured attack: combiner x score function x threshold strategy.
// Baseline families use only the last model and ignore the combiner.
struct AttackSpec {
  std::string name;
  AttackFamily family = AttackFamily::BackFront;
  Combiner combiner{};
  ScoreKind score = ScoreKind::Loss;
  ThresholdStrategyKind threshold = ThresholdStrategyKind::Batch;
  ThresholdMode mode = ThresholdMode::Accuracy;
  double rank_q = 0.1;

  bool needs_shadows() const {
    return family == AttackFamily::BaselineLira || score == ScoreKind::Lira ||
           threshold == ThresholdStrategyKind::Transfer;
  }
};

// One challenge outcome for one attack. `a`/`b` are the hidden epoch and
// membership bit; `a_hat`/`b_hat` the adversary's answers.
struct TrialRecord {
  int world = 0;
  int trial = 0;
  std::string attack;
  int a = 1;
  int b = 0;
  int a_hat = 1;
  int b_hat = 0;
  double combined = 0.0;
  double threshold = 0.0;
  std::vector<double> model_scores;  // raw score per released model
};

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;
};

struct MetricsReport {
  std::string attack;
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when the attack makes no IN claims
  double recall = 0.0;
  double generic_accuracy = 0.0;
  double specific_accuracy = 0.0;
  ConfusionCounts counts;
  std::vector<std::vector<std::int64_t>> epoch_confusion;  // k x k, b=1 & b_hat=1
  std::int64_t trials = 0;
};

// Aggregates the records of a single attack; asserts that the derived
// rates are consistent with the confusion counts.
MetricsReport compute_metrics(const std::vector<TrialRecord>& records);

// Random guessing over membership and epoch: specific accuracy 1/(2k).
double baseline_random(int k);

// Generic attack with accuracy p plus a uniform epoch guess: p/k.
double baseline_generic(double p, int k);

struct ExperimentConfig {
  Instantiation instantiation = Instantiation::SingleUpdate;
  int k = 1;
  std::shared_ptr<const Sampler> initial_dist;  // draws D_0
  std::shared_ptr<const Sampler> update_dist;   // draws D_i and challenges
  int n0 = 0;
  int n_up = 0;
  ArchDescriptor arch;
  TrainConfig initial_config;
  UpdateStrategy update;
  std::vector<AttackSpec> attacks;
  int shadow_count = 8;
  int worlds = 20;
  int challenges_per_world = 20;
  std::uint64_t seed = 0;
  int workers = 0;  // 0 = hardware concurrency
};

void validate_experiment_config(const ExperimentConfig& config);

struct ExperimentResult {
  std::vector<MetricsReport> reports;  // one per configured attack
  std::vector<TrialRecord> records;    // world-major, trial-major, attack order
  std::string best_attack;             // max generic accuracy, reported not selected
};

// The full protocol: per world, draws the update sets, builds the model
// trace, calibrates every configured attack, evaluates balanced IN/OUT
// challenges and aggregates per-attack metrics. Deterministic for a fixed
// seed regardless of worker count.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Baseline decisions on the final model only.
bool baseline_gap_decision(const Eigen::VectorXd& x, int y, const Model& f);
bool baseline_loss_decision(const Eigen::VectorXd& x, int y, const Model& f,
                            double avg_train_loss);
bool baseline_lira_decision(const Eigen::VectorXd& x, int y, const Model& f,
                            const ShadowSet& shadows, double threshold);

// JSONL serialization of trial records (one object per line) and the
// summary report document; both are byte-stable for a fixed seed.
std::string records_to_jsonl(const std::vector<TrialRecord>& records);
std::string result_to_summary_json(const ExperimentResult& result,
                                   const ExperimentConfig& config);

// Per-point decision export: point id, combined score, threshold, verdict,
// epoch.
std::string records_to_decision_csv(const std::vector<TrialRecord>& records);

}  // namespace miup
