#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "miup/dataset.hpp"

namespace miup {

// Network shape: input dimension, optional ReLU hidden layers, softmax
// output over num_classes. An empty hidden list is multinomial logistic
// regression.
struct ArchDescriptor {
  int input_dim = 0;
  std::vector<int> hidden;
  int num_classes = 0;

  bool operator==(const ArchDescriptor&) const = default;
};

// Fully-connected model with ReLU hidden activations and a softmax head.
// Models are immutable values: training ops return new models.
struct Model {
  ArchDescriptor arch;
  std::vector<Eigen::MatrixXd> weights;  // weights[l]: out x in
  std::vector<Eigen::VectorXd> biases;

  std::size_t num_layers() const { return weights.size(); }
};

// Gradient of the mean cross-entropy over a batch, same shapes as the model.
struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  void scale(double s);
  void add(const Gradients& other, double s = 1.0);
  double squared_norm() const;
};

Gradients zero_gradients(const Model& model);

// Zero parameters for logistic regression, uniform(-1/sqrt(fan_in),
// 1/sqrt(fan_in)) per layer for networks with hidden layers; seed-derived.
Model init_model(const ArchDescriptor& arch, std::uint64_t seed);

// Throws std::invalid_argument on shape-chain violations or non-finite
// parameters.
void validate_model(const Model& model);

// Softmax class probabilities; entries are positive and sum to 1.
Eigen::VectorXd predict_proba(const Model& model, const Eigen::VectorXd& x);

// Per-class logits before the softmax.
Eigen::VectorXd logits(const Model& model, const Eigen::VectorXd& x);

int predict_class(const Model& model, const Eigen::VectorXd& x);

// Cross-entropy -log p_y(x), computed through log-sum-exp.
double loss(const Model& model, const Eigen::VectorXd& x, int y);

// Mean cross-entropy over the given rows (all rows when idx is empty).
double mean_loss(const Model& model, const Dataset& data,
                 const std::vector<int>& idx = {});

double accuracy(const Model& model, const Dataset& data);

// Mean cross-entropy gradient over the given rows.
Gradients batch_gradient(const Model& model, const Dataset& data,
                         const std::vector<int>& idx);

// Gradient of the single-example cross-entropy.
Gradients example_gradient(const Model& model, const Eigen::VectorXd& x, int y);

// Checkpoint as JSON: layer shapes plus row-major parameters.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace miup
