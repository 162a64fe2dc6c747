#include "miup/train.hpp"

#include <cassert>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "miup/rng.hpp"

namespace miup {

namespace {

void apply_gradients(Model& model, const Gradients& grads, double learning_rate) {
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    model.weights[l] -= learning_rate * grads.weights[l];
    model.biases[l] -= learning_rate * grads.biases[l];
  }
}

void check_finite(const Gradients& grads, int epoch, int batch) {
  for (const auto& w : grads.weights) {
    if (!w.allFinite()) {
      std::ostringstream msg;
      msg << "non-finite gradient at epoch " << epoch << ", batch " << batch;
      throw std::runtime_error(msg.str());
    }
  }
}

std::vector<std::vector<int>> epoch_batches(Eigen::Index n, int batch_size, Rng& rng) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

void check_compatible(const Model& model, const Dataset& data) {
  if (data.dim() != model.arch.input_dim) {
    throw std::invalid_argument("training data dimension does not match model");
  }
  if (data.num_classes > model.arch.num_classes) {
    throw std::invalid_argument("training data has more classes than model");
  }
}

}  // namespace

void validate_train_config(const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) {
    throw std::invalid_argument("train config: learning_rate must be > 0");
  }
  if (config.batch_size < 1) {
    throw std::invalid_argument("train config: batch_size must be >= 1");
  }
  if (config.epochs < 1) {
    throw std::invalid_argument("train config: epochs must be >= 1");
  }
}

Model sgd_step(const Model& model, const Dataset& data, const std::vector<int>& batch,
               double learning_rate) {
  if (batch.empty()) throw std::invalid_argument("sgd_step: empty batch");
  check_compatible(model, data);
  const Gradients grads = batch_gradient(model, data, batch);
  check_finite(grads, 0, 0);
  Model next = model;
  apply_gradients(next, grads, learning_rate);
  return next;
}

Model train(const Model& start, const Dataset& data, const TrainConfig& config) {
  validate_train_config(config);
  check_compatible(start, data);
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  Model model = start;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, streams::kEpoch, static_cast<std::uint64_t>(epoch)));
    const auto batches = epoch_batches(data.size(), config.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Gradients grads = batch_gradient(model, data, batches[b]);
      check_finite(grads, epoch, static_cast<int>(b));
      apply_gradients(model, grads, config.learning_rate);
    }
  }
  return model;
}

Model train_initial(const ArchDescriptor& arch, const TrainConfig& config,
                    const Dataset& d0) {
  if (d0.size() == 0) throw std::invalid_argument("train_initial: empty dataset");
  if (d0.dim() != arch.input_dim) {
    throw std::invalid_argument("train_initial: data dimension does not match arch");
  }
  return train(init_model(arch, config.seed), d0, config);
}

UpdateTrace make_trace(Model f0, Dataset d0) {
  UpdateTrace trace;
  trace.models.push_back(std::move(f0));
  trace.initial_set = std::move(d0);
  return trace;
}

const Model& update_model(UpdateTrace& trace, Dataset di, const UpdateStrategy& strategy) {
  if (di.size() == 0) throw std::invalid_argument("update_model: empty update set");
  const Model& prev = trace.models.back();
  Model next;
  if (strategy.kind == UpdateKind::SGDNew) {
    next = train(prev, di, strategy.config);
  } else {
    Dataset full = trace.initial_set;
    for (const Dataset& past : trace.update_sets) full = concat(full, past);
    full = concat(full, di);
    next = train(prev, full, strategy.config);
  }
  trace.models.push_back(std::move(next));
  trace.update_sets.push_back(std::move(di));
  trace.strategy_log.push_back(strategy.kind);
  return trace.models.back();
}

void validate_dp_config(const DPConfig& dp) {
  if (!(dp.clip_norm > 0.0)) {
    throw std::invalid_argument("dp config: clip_norm must be > 0");
  }
  if (dp.noise_multiplier < 0.0) {
    throw std::invalid_argument("dp config: noise_multiplier must be >= 0");
  }
  if (!(dp.delta > 0.0 && dp.delta < 1.0)) {
    throw std::invalid_argument("dp config: delta must lie in (0,1)");
  }
}

Model dp_sgd_step(const Model& model, const Dataset& data, const std::vector<int>& batch,
                  double learning_rate, const DPConfig& dp, std::uint64_t seed) {
  if (batch.empty()) throw std::invalid_argument("dp_sgd_step: empty batch");
  validate_dp_config(dp);
  check_compatible(model, data);

  Gradients summed = zero_gradients(model);
  for (int i : batch) {
    Gradients g = example_gradient(model, data.features.row(i).transpose(),
                                   data.labels[static_cast<std::size_t>(i)]);
    check_finite(g, 0, 0);
    const double norm = std::sqrt(g.squared_norm());
    if (norm > dp.clip_norm) g.scale(dp.clip_norm / norm);
    assert(std::sqrt(g.squared_norm()) <= dp.clip_norm * (1.0 + 1e-9));
    summed.add(g);
  }
  if (dp.noise_multiplier > 0.0) {
    Rng rng(derive_seed(seed, streams::kNoise));
    const double stddev = dp.noise_multiplier * dp.clip_norm;
    for (auto& w : summed.weights) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) += stddev * rng.normal();
      }
    }
    for (auto& b : summed.biases) {
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] += stddev * rng.normal();
    }
  }
  summed.scale(1.0 / static_cast<double>(batch.size()));
  Model next = model;
  apply_gradients(next, summed, learning_rate);
  return next;
}

Model dp_train(const Model& start, const Dataset& data, const TrainConfig& config,
               const DPConfig& dp) {
  validate_train_config(config);
  validate_dp_config(dp);
  check_compatible(start, data);
  Model model = start;
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, streams::kEpoch, static_cast<std::uint64_t>(epoch)));
    for (const auto& batch : epoch_batches(data.size(), config.batch_size, rng)) {
      model = dp_sgd_step(model, data, batch, config.learning_rate, dp,
                          derive_seed(config.seed, streams::kNoise, step++));
    }
  }
  return model;
}

}  // namespace miup
