#include "miup/experiment.hpp"

#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "miup/parallel.hpp"
#include "miup/stats.hpp"

namespace miup {

namespace {

using nlohmann::json;

// Per-world working state shared by all attacks.
struct World {
  UpdateTrace trace;
  double avg_train_loss = 0.0;       // final model's loss over its training data
  Dataset batch_in;                  // all update points, world order
  Dataset batch_out;                 // fresh draw of the same size
  Dataset out_challenges;            // fresh candidates for b = 0 trials
};

struct ResolvedAttack {
  const AttackSpec* spec = nullptr;
  double threshold = 0.0;              // BackFront / baselines
  std::vector<double> delta_thresholds;
};

double scorer_value(const AttackSpec& spec, const ShadowSet* shadows,
                    const Eigen::VectorXd& x, int y, const Model& f) {
  if (spec.score == ScoreKind::Lira) return lira_score(x, y, f, *shadows);
  return loss(f, x, y);
}

// Combined score on a shadow (pre, post) pair for a pool point; LiRA uses
// the pool-index OUT fit rather than treating the point as fresh.
double shadow_pair_combined(const AttackSpec& spec, const ShadowSet& shadows,
                            const Shadow& shadow, int pool_index) {
  const Eigen::VectorXd x = shadows.pool.features.row(pool_index).transpose();
  const int y = shadows.pool.labels[static_cast<std::size_t>(pool_index)];
  double s_pre = 0.0;
  double s_post = 0.0;
  if (spec.score == ScoreKind::Lira) {
    s_pre = lira_score(x, y, shadow.pre, shadows, pool_index);
    s_post = lira_score(x, y, shadow.post, shadows, pool_index);
  } else {
    s_pre = loss(shadow.pre, x, y);
    s_post = loss(shadow.post, x, y);
  }
  return spec.combiner.combine(s_pre, s_post);
}

double transfer_threshold(const AttackSpec& spec, const ShadowSet& shadows) {
  const Shadow& shadow = shadows.shadows.front();
  std::vector<double> combined;
  combined.reserve(static_cast<std::size_t>(shadows.pool.size()));
  for (Eigen::Index i = 0; i < shadows.pool.size(); ++i) {
    combined.push_back(shadow_pair_combined(spec, shadows, shadow, static_cast<int>(i)));
  }
  return calibrate_batch(combined, spec.mode);
}

// Baseline LiRA threshold calibrated on the shadow pool's scores against
// the post-update shadow models (median, balanced by the half split).
double lira_baseline_threshold(const ShadowSet& shadows) {
  std::vector<double> scores;
  for (const Shadow& shadow : shadows.shadows) {
    for (Eigen::Index i = 0; i < shadows.pool.size(); ++i) {
      const Eigen::VectorXd x = shadows.pool.features.row(i).transpose();
      const int y = shadows.pool.labels[static_cast<std::size_t>(i)];
      scores.push_back(lira_score(x, y, shadow.post, shadows, static_cast<int>(i)));
    }
  }
  return calibrate_batch(scores, ThresholdMode::Accuracy);
}

World build_world(const ExperimentConfig& config, std::uint64_t world_seed) {
  World world;
  // One block per world from the challenge distribution: the k update sets,
  // the calibration OUT batch and the b=0 challenge candidates. Finite
  // pools deal the block without replacement, so OUT points never collide
  // with any update set of the same world.
  const int per_set = config.k * config.n_up;
  const int block_size = 2 * per_set + config.challenges_per_world;
  Dataset block = config.update_dist->draw(
      block_size, derive_seed(world_seed, streams::kData, 1), "update_block");

  Dataset d0 = config.initial_dist->draw(config.n0,
                                         derive_seed(world_seed, streams::kData, 0),
                                         "d0");
  TrainConfig initial = config.initial_config;
  initial.seed = derive_seed(world_seed, streams::kInit);
  Model f0 = train_initial(config.arch, initial, d0);
  world.trace = make_trace(std::move(f0), std::move(d0));

  std::vector<int> rows(static_cast<std::size_t>(config.n_up));
  for (int i = 1; i <= config.k; ++i) {
    for (int j = 0; j < config.n_up; ++j) rows[static_cast<std::size_t>(j)] = (i - 1) * config.n_up + j;
    Dataset di = subset(block, rows);
    di.source_tag = "d" + std::to_string(i);
    UpdateStrategy strategy = config.update;
    strategy.config.seed =
        derive_seed(world_seed, streams::kEpoch, static_cast<std::uint64_t>(i));
    update_model(world.trace, std::move(di), strategy);
  }

  Dataset cumulative = world.trace.initial_set;
  for (const Dataset& di : world.trace.update_sets) cumulative = concat(cumulative, di);
  world.avg_train_loss = mean_loss(world.trace.back(), cumulative);

  world.batch_in = world.trace.update_sets.front();
  for (int i = 1; i < config.k; ++i) {
    world.batch_in = concat(world.batch_in, world.trace.update_sets[static_cast<std::size_t>(i)]);
  }
  std::vector<int> out_rows(static_cast<std::size_t>(per_set));
  for (int j = 0; j < per_set; ++j) out_rows[static_cast<std::size_t>(j)] = per_set + j;
  world.batch_out = subset(block, out_rows);
  world.batch_out.source_tag = "batch_out";

  std::vector<int> challenge_rows(static_cast<std::size_t>(config.challenges_per_world));
  for (int j = 0; j < config.challenges_per_world; ++j) {
    challenge_rows[static_cast<std::size_t>(j)] = 2 * per_set + j;
  }
  world.out_challenges = subset(block, challenge_rows);
  world.out_challenges.source_tag = "out_challenges";
  return world;
}

std::vector<double> back_front_scores(const AttackSpec& spec, const ShadowSet* shadows,
                                      const World& world, const Dataset& points) {
  std::vector<double> combined;
  combined.reserve(static_cast<std::size_t>(points.size()));
  for (Eigen::Index i = 0; i < points.size(); ++i) {
    const Eigen::VectorXd x = points.features.row(i).transpose();
    const int y = points.labels[static_cast<std::size_t>(i)];
    combined.push_back(spec.combiner.combine(
        scorer_value(spec, shadows, x, y, world.trace.front()),
        scorer_value(spec, shadows, x, y, world.trace.back())));
  }
  return combined;
}

ResolvedAttack resolve_attack(const AttackSpec& spec, const ShadowSet* shadows,
                              const World& world, int k, int n_up,
                              double lira_baseline_t) {
  ResolvedAttack resolved;
  resolved.spec = &spec;
  switch (spec.family) {
    case AttackFamily::BackFront: {
      if (spec.threshold == ThresholdStrategyKind::Batch) {
        std::vector<double> combined = back_front_scores(spec, shadows, world, world.batch_in);
        const std::vector<double> outs =
            back_front_scores(spec, shadows, world, world.batch_out);
        combined.insert(combined.end(), outs.begin(), outs.end());
        resolved.threshold = calibrate_batch(combined, spec.mode);
      } else if (spec.threshold == ThresholdStrategyKind::Rank) {
        resolved.threshold = calibrate_rank(
            back_front_scores(spec, shadows, world, world.batch_out), spec.rank_q);
      } else {
        resolved.threshold = transfer_threshold(spec, *shadows);
      }
      break;
    }
    case AttackFamily::Delta: {
      // Combined scores per adjacent model pair over the calibration batch.
      Dataset batch = concat(world.batch_in, world.batch_out);
      std::vector<std::vector<double>> pair_scores(static_cast<std::size_t>(k));
      for (int i = 1; i <= k; ++i) {
        auto& row = pair_scores[static_cast<std::size_t>(i - 1)];
        row.reserve(static_cast<std::size_t>(batch.size()));
        const Model& prev = world.trace.models[static_cast<std::size_t>(i - 1)];
        const Model& curr = world.trace.models[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < batch.size(); ++j) {
          const Eigen::VectorXd x = batch.features.row(j).transpose();
          const int y = batch.labels[static_cast<std::size_t>(j)];
          row.push_back(spec.combiner.combine(scorer_value(spec, shadows, x, y, prev),
                                              scorer_value(spec, shadows, x, y, curr)));
        }
      }
      resolved.delta_thresholds = delta_thresholds(pair_scores, k, n_up);
      break;
    }
    case AttackFamily::BaselineGap:
      break;
    case AttackFamily::BaselineLoss:
      resolved.threshold = world.avg_train_loss;
      break;
    case AttackFamily::BaselineLira:
      resolved.threshold = lira_baseline_t;
      break;
  }
  return resolved;
}

}  // namespace

MetricsReport compute_metrics(const std::vector<TrialRecord>& records) {
  if (records.empty()) throw std::invalid_argument("compute_metrics: no records");
  MetricsReport report;
  report.attack = records.front().attack;
  report.trials = static_cast<std::int64_t>(records.size());

  int max_epoch = 1;
  for (const TrialRecord& r : records) max_epoch = std::max({max_epoch, r.a, r.a_hat});
  report.epoch_confusion.assign(
      static_cast<std::size_t>(max_epoch),
      std::vector<std::int64_t>(static_cast<std::size_t>(max_epoch), 0));

  std::int64_t generic_hits = 0;
  std::int64_t specific_hits = 0;
  for (const TrialRecord& r : records) {
    if (r.b == 1 && r.b_hat == 1) ++report.counts.tp;
    if (r.b == 0 && r.b_hat == 1) ++report.counts.fp;
    if (r.b == 0 && r.b_hat == 0) ++report.counts.tn;
    if (r.b == 1 && r.b_hat == 0) ++report.counts.fn;
    if (r.b_hat == r.b) {
      ++generic_hits;
      if (r.b == 0 || r.a_hat == r.a) ++specific_hits;
    }
    if (r.b == 1 && r.b_hat == 1) {
      ++report.epoch_confusion[static_cast<std::size_t>(r.a - 1)]
                              [static_cast<std::size_t>(r.a_hat - 1)];
    }
  }
  const auto n = static_cast<double>(report.trials);
  report.accuracy = static_cast<double>(report.counts.tp + report.counts.tn) / n;
  report.generic_accuracy = static_cast<double>(generic_hits) / n;
  report.specific_accuracy = static_cast<double>(specific_hits) / n;
  const std::int64_t claims = report.counts.tp + report.counts.fp;
  report.precision = claims > 0 ? static_cast<double>(report.counts.tp) /
                                      static_cast<double>(claims)
                                : 0.0;
  const std::int64_t positives = report.counts.tp + report.counts.fn;
  report.recall = positives > 0 ? static_cast<double>(report.counts.tp) /
                                      static_cast<double>(positives)
                                : 0.0;

  if (report.counts.tp + report.counts.fp + report.counts.tn + report.counts.fn !=
      report.trials) {
    throw std::logic_error("compute_metrics: confusion counts do not sum to trials");
  }
  if (report.accuracy != report.generic_accuracy) {
    throw std::logic_error("compute_metrics: accuracy inconsistent with counts");
  }
  if (report.specific_accuracy > report.generic_accuracy) {
    throw std::logic_error("compute_metrics: specific accuracy exceeds generic");
  }
  return report;
}

double baseline_random(int k) {
  if (k < 1) throw std::invalid_argument("baseline_random: k must be >= 1");
  return 1.0 / (2.0 * static_cast<double>(k));
}

double baseline_generic(double p, int k) {
  if (k < 1) throw std::invalid_argument("baseline_generic: k must be >= 1");
  if (p < 0.0 || p > 1.0) {
    throw std::invalid_argument("baseline_generic: p must lie in [0,1]");
  }
  return p / static_cast<double>(k);
}

void validate_experiment_config(const ExperimentConfig& config) {
  if (!config.initial_dist || !config.update_dist) {
    throw std::invalid_argument("experiment: missing data distributions");
  }
  if (config.instantiation == Instantiation::MultiUpdate && config.k < 2) {
    throw std::invalid_argument("experiment: multi-update requires k >= 2");
  }
  if (config.instantiation != Instantiation::MultiUpdate && config.k != 1) {
    throw std::invalid_argument("experiment: single-update and shift require k == 1");
  }
  if (config.n0 < 1 || config.n_up < 1) {
    throw std::invalid_argument("experiment: n0 and n_up must be >= 1");
  }
  if (config.worlds < 1 || config.challenges_per_world < 1) {
    throw std::invalid_argument("experiment: worlds and challenges must be >= 1");
  }
  if (config.attacks.empty()) {
    throw std::invalid_argument("experiment: no attacks configured");
  }
  for (const AttackSpec& spec : config.attacks) {
    if (spec.name.empty()) throw std::invalid_argument("experiment: unnamed attack");
    if (spec.family == AttackFamily::Delta &&
        spec.threshold != ThresholdStrategyKind::Batch) {
      throw std::invalid_argument(
          "experiment: the delta attack supports the batch threshold only");
    }
    if (spec.family == AttackFamily::Delta &&
        config.instantiation != Instantiation::MultiUpdate) {
      throw std::invalid_argument("experiment: delta attack requires multi-update");
    }
  }
  if (config.initial_dist->dim() != config.update_dist->dim() ||
      config.initial_dist->num_classes() != config.update_dist->num_classes()) {
    throw std::invalid_argument("experiment: distribution shape mismatch");
  }
  if (config.arch.input_dim != config.initial_dist->dim() ||
      config.arch.num_classes != config.initial_dist->num_classes()) {
    throw std::invalid_argument("experiment: arch does not match data shape");
  }
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate_experiment_config(config);

  bool needs_shadows = false;
  for (const AttackSpec& spec : config.attacks) needs_shadows |= spec.needs_shadows();

  ShadowSet shadows;
  double lira_baseline_t = 0.0;
  if (needs_shadows) {
    if (config.shadow_count < 3) {
      throw std::invalid_argument(
          "experiment: configured attacks need shadows (shadow_count >= 3)");
    }
    const Dataset pool = config.update_dist->draw(
        2 * config.n_up, derive_seed(config.seed, streams::kShadow), "shadow_pool");
    ShadowRecipe recipe{config.arch, config.initial_config, config.update, config.n0};
    shadows = train_shadows(*config.initial_dist, pool, config.shadow_count, recipe,
                            derive_seed(config.seed, streams::kShadow, 1));
    for (const AttackSpec& spec : config.attacks) {
      if (spec.family == AttackFamily::BaselineLira) {
        lira_baseline_t = lira_baseline_threshold(shadows);
        break;
      }
    }
  }

  const int n_worlds = config.worlds;
  std::vector<std::vector<TrialRecord>> per_world(static_cast<std::size_t>(n_worlds));

  parallel_for(
      n_worlds,
      [&](int w) {
        const std::uint64_t world_seed =
            derive_seed(config.seed, streams::kWorld, static_cast<std::uint64_t>(w));
        const World world = build_world(config, world_seed);
        const ShadowSet* shadow_ptr = needs_shadows ? &shadows : nullptr;

        std::vector<ResolvedAttack> resolved;
        resolved.reserve(config.attacks.size());
        for (const AttackSpec& spec : config.attacks) {
          resolved.push_back(resolve_attack(spec, shadow_ptr, world, config.k,
                                            config.n_up, lira_baseline_t));
        }

        auto& records = per_world[static_cast<std::size_t>(w)];
        records.reserve(static_cast<std::size_t>(config.challenges_per_world) *
                        config.attacks.size());
        for (int t = 0; t < config.challenges_per_world; ++t) {
          Rng trial_rng(derive_seed(world_seed, streams::kTrial,
                                    static_cast<std::uint64_t>(t)));
          const int a = 1 + static_cast<int>(trial_rng.below(config.k));
          const int b = trial_rng.bernoulli(0.5) ? 1 : 0;
          // Epoch guess shared by every attack that answers IN without
          // inferring an epoch itself.
          const int random_epoch = 1 + static_cast<int>(trial_rng.below(config.k));

          Eigen::VectorXd x;
          int y = 0;
          if (b == 1) {
            const Dataset& da = world.trace.update_sets[static_cast<std::size_t>(a - 1)];
            const auto row = static_cast<Eigen::Index>(trial_rng.below(da.size()));
            x = da.features.row(row).transpose();
            y = da.labels[static_cast<std::size_t>(row)];
          } else {
            x = world.out_challenges.features.row(t).transpose();
            y = world.out_challenges.labels[static_cast<std::size_t>(t)];
          }

          for (const ResolvedAttack& attack : resolved) {
            const AttackSpec& spec = *attack.spec;
            TrialRecord record;
            record.world = w;
            record.trial = t;
            record.attack = spec.name;
            record.a = a;
            record.b = b;
            record.a_hat = random_epoch;
            record.threshold = attack.threshold;

            switch (spec.family) {
              case AttackFamily::BackFront: {
                for (const Model& f : world.trace.models) {
                  record.model_scores.push_back(scorer_value(spec, shadow_ptr, x, y, f));
                }
                record.combined = spec.combiner.combine(record.model_scores.front(),
                                                        record.model_scores.back());
                record.b_hat = decide_in(record.combined, attack.threshold) ? 1 : 0;
                break;
              }
              case AttackFamily::Delta: {
                for (const Model& f : world.trace.models) {
                  record.model_scores.push_back(scorer_value(spec, shadow_ptr, x, y, f));
                }
                record.b_hat = 0;
                double min_combined = std::numeric_limits<double>::infinity();
                for (int i = 1; i <= config.k; ++i) {
                  const double combined = spec.combiner.combine(
                      record.model_scores[static_cast<std::size_t>(i - 1)],
                      record.model_scores[static_cast<std::size_t>(i)]);
                  min_combined = std::min(min_combined, combined);
                  if (decide_in(combined,
                                attack.delta_thresholds[static_cast<std::size_t>(i - 1)])) {
                    record.b_hat = 1;
                    record.a_hat = i;
                    record.combined = combined;
                    record.threshold =
                        attack.delta_thresholds[static_cast<std::size_t>(i - 1)];
                    break;
                  }
                }
                if (record.b_hat == 0) record.combined = min_combined;
                break;
              }
              case AttackFamily::BaselineGap: {
                record.combined = gap_score(x, y, world.trace.back());
                record.threshold = 0.5;
                record.b_hat = record.combined == 0.0 ? 1 : 0;
                break;
              }
              case AttackFamily::BaselineLoss: {
                record.combined = loss(world.trace.back(), x, y);
                record.b_hat =
                    baseline_loss_decision(x, y, world.trace.back(), attack.threshold)
                        ? 1
                        : 0;
                break;
              }
              case AttackFamily::BaselineLira: {
                record.combined = lira_score(x, y, world.trace.back(), shadows);
                record.b_hat = decide_in(record.combined, attack.threshold) ? 1 : 0;
                break;
              }
            }
            records.push_back(std::move(record));
          }
        }
      },
      config.workers);

  ExperimentResult result;
  for (auto& world_records : per_world) {
    result.records.insert(result.records.end(),
                          std::make_move_iterator(world_records.begin()),
                          std::make_move_iterator(world_records.end()));
  }

  for (const AttackSpec& spec : config.attacks) {
    std::vector<TrialRecord> attack_records;
    for (const TrialRecord& r : result.records) {
      if (r.attack == spec.name) attack_records.push_back(r);
    }
    result.reports.push_back(compute_metrics(attack_records));
  }
  double best = -1.0;
  for (const MetricsReport& report : result.reports) {
    if (report.generic_accuracy > best) {
      best = report.generic_accuracy;
      result.best_attack = report.attack;
    }
  }
  return result;
}

bool baseline_gap_decision(const Eigen::VectorXd& x, int y, const Model& f) {
  return predict_class(f, x) == y;
}

bool baseline_loss_decision(const Eigen::VectorXd& x, int y, const Model& f,
                            double avg_train_loss) {
  return decide_in(loss(f, x, y), avg_train_loss);
}

bool baseline_lira_decision(const Eigen::VectorXd& x, int y, const Model& f,
                            const ShadowSet& shadows, double threshold) {
  return decide_in(lira_score(x, y, f, shadows), threshold);
}

std::string records_to_jsonl(const std::vector<TrialRecord>& records) {
  std::ostringstream out;
  for (const TrialRecord& r : records) {
    json line;
    line["world"] = r.world;
    line["trial"] = r.trial;
    line["attack"] = r.attack;
    line["a"] = r.a;
    line["b"] = r.b;
    line["a_hat"] = r.a_hat;
    line["b_hat"] = r.b_hat;
    line["combined"] = r.combined;
    line["threshold"] = r.threshold;
    line["model_scores"] = r.model_scores;
    out << line.dump() << "\n";
  }
  return out.str();
}

namespace {

json report_to_json(const MetricsReport& report) {
  json doc;
  doc["attack"] = report.attack;
  doc["accuracy"] = report.accuracy;
  doc["precision"] = report.precision;
  doc["recall"] = report.recall;
  doc["generic_accuracy"] = report.generic_accuracy;
  doc["specific_accuracy"] = report.specific_accuracy;
  doc["trials"] = report.trials;
  doc["counts"] = {{"tp", report.counts.tp},
                   {"fp", report.counts.fp},
                   {"tn", report.counts.tn},
                   {"fn", report.counts.fn}};
  doc["epoch_confusion"] = report.epoch_confusion;
  return doc;
}

}  // namespace

std::string result_to_summary_json(const ExperimentResult& result,
                                   const ExperimentConfig& config) {
  json doc;
  doc["k"] = config.k;
  doc["n0"] = config.n0;
  doc["n_up"] = config.n_up;
  doc["worlds"] = config.worlds;
  doc["challenges_per_world"] = config.challenges_per_world;
  doc["seed"] = config.seed;
  doc["baseline_random_specific"] = baseline_random(config.k);
  doc["best_attack"] = result.best_attack;
  json reports = json::array();
  for (const MetricsReport& report : result.reports) {
    json r = report_to_json(report);
    r["baseline_generic_specific"] = baseline_generic(report.generic_accuracy, config.k);
    reports.push_back(std::move(r));
  }
  doc["attacks"] = std::move(reports);
  return doc.dump(2) + "\n";
}

std::string records_to_decision_csv(const std::vector<TrialRecord>& records) {
  std::ostringstream out;
  out << "point_id,attack,combined,threshold,verdict,epoch\n";
  out.precision(12);
  for (const TrialRecord& r : records) {
    out << r.world << ":" << r.trial << "," << r.attack << "," << r.combined << ","
        << r.threshold << "," << (r.b_hat == 1 ? "IN" : "OUT") << ","
        << (r.b_hat == 1 ? r.a_hat : 0) << "\n";
  }
  return out.str();
}

}  // namespace miup
