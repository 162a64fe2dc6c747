#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "miup/rng.hpp"

namespace miup {

// Immutable labeled sample collection. Rows of `features` are samples,
// columns are the d input features; labels are dense class indices in
// [0, num_classes).
struct Dataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  int num_classes = 0;
  std::string source_tag;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
};

// Throws std::invalid_argument when the row/label/class invariants fail.
void validate_dataset(const Dataset& data);

// Row-subset and concatenation helpers used by the update strategies.
Dataset subset(const Dataset& data, const std::vector<int>& rows);
Dataset concat(const Dataset& a, const Dataset& b);

// One labeled point drawn from a distribution.
struct LabeledPoint {
  Eigen::VectorXd x;
  int y = 0;
};

// A sampleable labeled distribution. Implementations must be pure: the
// output depends only on the Rng stream or seed handed in.
class Sampler {
 public:
  virtual ~Sampler() = default;
  virtual int dim() const = 0;
  virtual int num_classes() const = 0;
  virtual LabeledPoint sample(Rng& rng) const = 0;

  // Draws an n-point dataset. Finite-pool implementations override this to
  // deal without replacement, so one call yields pairwise-distinct rows.
  virtual Dataset draw(int n, std::uint64_t seed, const std::string& tag) const;
};

// Spherical Gaussian class cluster: N(mean, sigma^2 I) with a fixed label.
struct GaussianClassSpec {
  Eigen::VectorXd mean;
  double sigma = 1.0;
  int samples_per_class = 0;  // used by synth_gaussian_classes only
};

// Balanced mixture of per-class spherical Gaussians; classes are drawn
// uniformly, then the point from the class cluster.
class GaussianClassSampler : public Sampler {
 public:
  explicit GaussianClassSampler(std::vector<GaussianClassSpec> classes);

  int dim() const override { return static_cast<int>(classes_.front().mean.size()); }
  int num_classes() const override { return static_cast<int>(classes_.size()); }
  LabeledPoint sample(Rng& rng) const override;

  const std::vector<GaussianClassSpec>& classes() const { return classes_; }

 private:
  std::vector<GaussianClassSpec> classes_;
};

// Empirical distribution backed by a finite dataset. Single-point draws
// sample rows with replacement; draw() deals distinct rows from a
// seed-derived permutation and fails when the pool is exhausted.
class PoolSampler : public Sampler {
 public:
  explicit PoolSampler(Dataset pool);

  int dim() const override { return static_cast<int>(pool_.dim()); }
  int num_classes() const override { return pool_.num_classes; }
  LabeledPoint sample(Rng& rng) const override;
  Dataset draw(int n, std::uint64_t seed, const std::string& tag) const override;

  const Dataset& pool() const { return pool_; }

 private:
  Dataset pool_;
};

// Two-component shift mixture: each sample comes from `target` with
// probability `alpha`, else from `source`.
struct MixtureSpec {
  std::shared_ptr<const Sampler> source;
  std::shared_ptr<const Sampler> target;
  double alpha = 0.0;
};

// Sampler view of a mixture, for harnesses that need a distribution
// handle. Draws one selector and one point from the same stream.
class MixtureSampler : public Sampler {
 public:
  explicit MixtureSampler(MixtureSpec spec);

  int dim() const override { return spec_.source->dim(); }
  int num_classes() const override { return spec_.source->num_classes(); }
  LabeledPoint sample(Rng& rng) const override;

  const MixtureSpec& spec() const { return spec_; }

 private:
  MixtureSpec spec_;
};

// Draws n points by giving each point its own child stream
// derive_seed(seed, streams::kData, i). Point i is therefore identical no
// matter which batch of draws it belongs to.
Dataset sample_dataset(const Sampler& sampler, int n, std::uint64_t seed,
                       const std::string& tag = "sampled");

// Fixed per-class sample counts, labels assigned by generating class.
Dataset synth_gaussian_classes(const std::vector<GaussianClassSpec>& classes,
                               std::uint64_t seed);

struct MixtureDraw {
  Dataset data;
  std::vector<std::uint8_t> from_target;  // origin trace, one flag per row
};

// Per-sample Bernoulli(alpha) component selection. Selection and point
// draws use separate child streams, so alpha=0 (resp. 1) reproduces
// sample_dataset on the source (resp. target) bit for bit.
MixtureDraw mixture_sample_traced(const MixtureSpec& mix, int n, std::uint64_t seed);
Dataset mixture_sample(const MixtureSpec& mix, int n, std::uint64_t seed);

}  // namespace miup
