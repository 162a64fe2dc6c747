#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "miup/dataset.hpp"
#include "miup/model.hpp"
#include "miup/train.hpp"

namespace miup {

// Per-example membership score; LOWER means more member-like for every
// implementation.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(const Eigen::VectorXd& x, int y, const Model& f) const = 0;
  virtual std::string name() const = 0;
};

// Cross-entropy loss as the score.
class LossScorer : public Scorer {
 public:
  double score(const Eigen::VectorXd& x, int y, const Model& f) const override {
    return loss(f, x, y);
  }
  std::string name() const override { return "loss"; }
};

double loss_score(const Eigen::VectorXd& x, int y, const Model& f);

// 0/1 score: 0 when the model classifies (x, y) correctly, 1 otherwise.
class GapScorer : public Scorer {
 public:
  double score(const Eigen::VectorXd& x, int y, const Model& f) const override {
    return predict_class(f, x) == y ? 0.0 : 1.0;
  }
  std::string name() const override { return "gap"; }
};

double gap_score(const Eigen::VectorXd& x, int y, const Model& f);

// One shadow world: a base model, the model after updating on a random
// half of the pool, and the membership flag per pool point.
struct Shadow {
  Model pre;
  Model post;
  std::vector<std::uint8_t> member;  // 1 = pool point was in the update half
};

// Pipeline description mirrored by the shadow models.
struct ShadowRecipe {
  ArchDescriptor arch;
  TrainConfig base_config;
  UpdateStrategy update;
  int base_size = 0;  // attacker-side surrogate for n_0
};

// Shadow models plus the per-pool-point OUT-loss Gaussian fit backing the
// LiRA score. Immutable after construction.
struct ShadowSet {
  Dataset pool;
  std::vector<Shadow> shadows;
  // Fitted over post-update shadow models in which the point was OUT.
  std::vector<double> out_mean;
  std::vector<double> out_std;  // floored at kStdFloor

  static constexpr double kStdFloor = 1e-8;
  int size() const { return static_cast<int>(shadows.size()); }
};

// Trains m shadow worlds. Each shadow draws its own base set from
// `source`, trains with the base recipe, then updates on an independent
// uniformly random half of the pool with the recipe's update strategy.
// Requires pool size >= 2 and even.
ShadowSet train_shadows(const Sampler& source, const Dataset& pool, int m,
                        const ShadowRecipe& recipe, std::uint64_t seed);

// Recomputes the OUT-loss fit (called by train_shadows; exposed for
// deserialized sets).
void fit_out_stats(ShadowSet& shadows);

// z-score of a target loss against a fitted OUT-loss sample; the fitted
// standard deviation is floored at ShadowSet::kStdFloor. Requires >= 2
// OUT losses.
double lira_z(double target_loss, const std::vector<double>& out_losses);

// Negated-orientation LiRA: z-score of loss(f, x, y) against the
// per-example OUT-loss Gaussian. `pool_index`, when given, restricts the
// fit to shadows where that pool point was OUT; otherwise the point is
// assumed fresh and every shadow counts as OUT. Requires >= 2 OUT shadows.
double lira_score(const Eigen::VectorXd& x, int y, const Model& f,
                  const ShadowSet& shadows,
                  std::optional<int> pool_index = std::nullopt);

class LiraScorer : public Scorer {
 public:
  explicit LiraScorer(const ShadowSet& shadows) : shadows_(&shadows) {}
  double score(const Eigen::VectorXd& x, int y, const Model& f) const override {
    return lira_score(x, y, f, *shadows_);
  }
  std::string name() const override { return "lira"; }

 private:
  const ShadowSet* shadows_;
};

// Persists the shadow models, pool and split metadata so attacks can be
// re-run without retraining.
void save_shadow_set(const ShadowSet& shadows, const std::string& path);
ShadowSet load_shadow_set(const std::string& path);

}  // namespace miup
