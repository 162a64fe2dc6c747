#pragma once

#include <cstdint>
#include <vector>

#include "miup/dataset.hpp"
#include "miup/model.hpp"

namespace miup {

struct TrainConfig {
  double learning_rate = 0.01;
  int batch_size = 32;
  int epochs = 1;
  std::uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& config);

enum class UpdateKind { SGDNew, SGDFull };

// How model f_{i-1} is refreshed with update set D_i: SGDNew trains on D_i
// alone, SGDFull on the union D_0 .. D_i; each carries its own recipe.
struct UpdateStrategy {
  UpdateKind kind = UpdateKind::SGDNew;
  TrainConfig config;
};

// The released model sequence f_0 .. f_k together with the data that
// produced it.
struct UpdateTrace {
  std::vector<Model> models;        // f_0 .. f_k
  Dataset initial_set;              // D_0
  std::vector<Dataset> update_sets; // D_1 .. D_k
  std::vector<UpdateKind> strategy_log;

  int k() const { return static_cast<int>(update_sets.size()); }
  const Model& front() const { return models.front(); }
  const Model& back() const { return models.back(); }
};

// One minibatch step: theta - (eta/B) * sum of per-example gradients.
Model sgd_step(const Model& model, const Dataset& data, const std::vector<int>& batch,
               double learning_rate);

// Epoch loop with per-epoch shuffling from the config seed stream; the
// last short batch is kept. Throws on non-finite loss, reporting the
// epoch and batch.
Model train(const Model& start, const Dataset& data, const TrainConfig& config);

// Trains a fresh model (seed-derived initialization) on D_0.
Model train_initial(const ArchDescriptor& arch, const TrainConfig& config,
                    const Dataset& d0);

UpdateTrace make_trace(Model f0, Dataset d0);

// Applies the strategy to the last model in the trace, appends the new
// model and D_i, and returns a reference to the appended model.
const Model& update_model(UpdateTrace& trace, Dataset di, const UpdateStrategy& strategy);

// Differentially private SGD parameters.
struct DPConfig {
  double clip_norm = 1.0;        // C
  double noise_multiplier = 0.0; // sigma
  double delta = 1e-4;
};

void validate_dp_config(const DPConfig& dp);

// Per-example gradients clipped to L2 norm <= C, summed, Gaussian noise
// N(0, sigma^2 C^2 I) added to the sum, then divided by the batch size and
// applied with the learning rate.
Model dp_sgd_step(const Model& model, const Dataset& data, const std::vector<int>& batch,
                  double learning_rate, const DPConfig& dp, std::uint64_t seed);

// Epoch loop over dp_sgd_step with per-step noise seeds derived from
// config.seed.
Model dp_train(const Model& start, const Dataset& data, const TrainConfig& config,
               const DPConfig& dp);

}  // namespace miup
