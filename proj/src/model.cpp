#include "miup/model.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "miup/rng.hpp"

namespace miup {

namespace {

using nlohmann::json;

std::vector<int> layer_inputs(const ArchDescriptor& arch) {
  std::vector<int> in{arch.input_dim};
  for (int h : arch.hidden) in.push_back(h);
  return in;
}

std::vector<int> layer_outputs(const ArchDescriptor& arch) {
  std::vector<int> out = arch.hidden;
  out.push_back(arch.num_classes);
  return out;
}

void check_input(const Model& model, const Eigen::VectorXd& x) {
  if (x.size() != model.arch.input_dim) {
    std::ostringstream msg;
    msg << "input dimension " << x.size() << " != model input "
        << model.arch.input_dim;
    throw std::invalid_argument(msg.str());
  }
}

// Forward pass keeping post-activation values per layer for backprop.
struct ForwardTrace {
  std::vector<Eigen::VectorXd> activations;  // a_0 = x, a_l = relu(W_l a_{l-1} + b_l)
  Eigen::VectorXd logits;
};

ForwardTrace forward(const Model& model, const Eigen::VectorXd& x) {
  ForwardTrace trace;
  trace.activations.reserve(model.num_layers());
  trace.activations.push_back(x);
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l + 1 < model.num_layers(); ++l) {
    a = (model.weights[l] * a + model.biases[l]).cwiseMax(0.0);
    trace.activations.push_back(a);
  }
  trace.logits = model.weights.back() * a + model.biases.back();
  return trace;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const Eigen::VectorXd shifted = z.array() - z.maxCoeff();
  Eigen::VectorXd e = shifted.array().exp();
  return e / e.sum();
}

double log_sum_exp(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

// Backprop from the softmax cross-entropy head; accumulates into grads.
void accumulate_example_gradient(const Model& model, const ForwardTrace& trace,
                                 int y, Gradients& grads) {
  Eigen::VectorXd delta = softmax(trace.logits);
  delta[y] -= 1.0;
  for (std::size_t l = model.num_layers(); l-- > 0;) {
    grads.weights[l].noalias() += delta * trace.activations[l].transpose();
    grads.biases[l] += delta;
    if (l > 0) {
      Eigen::VectorXd upstream = model.weights[l].transpose() * delta;
      // ReLU mask from the stored post-activation values.
      delta = (trace.activations[l].array() > 0.0)
                  .select(upstream.array(), 0.0)
                  .matrix();
    }
  }
}

}  // namespace

void Gradients::scale(double s) {
  for (auto& w : weights) w *= s;
  for (auto& b : biases) b *= s;
}

void Gradients::add(const Gradients& other, double s) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += s * other.weights[l];
    biases[l] += s * other.biases[l];
  }
}

double Gradients::squared_norm() const {
  double total = 0.0;
  for (const auto& w : weights) total += w.squaredNorm();
  for (const auto& b : biases) total += b.squaredNorm();
  return total;
}

Gradients zero_gradients(const Model& model) {
  Gradients g;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    g.weights.emplace_back(Eigen::MatrixXd::Zero(model.weights[l].rows(),
                                                 model.weights[l].cols()));
    g.biases.emplace_back(Eigen::VectorXd::Zero(model.biases[l].size()));
  }
  return g;
}

Model init_model(const ArchDescriptor& arch, std::uint64_t seed) {
  if (arch.input_dim <= 0 || arch.num_classes <= 1) {
    throw std::invalid_argument("arch: need input_dim > 0 and num_classes > 1");
  }
  for (int h : arch.hidden) {
    if (h <= 0) throw std::invalid_argument("arch: hidden sizes must be positive");
  }
  Model model;
  model.arch = arch;
  const std::vector<int> ins = layer_inputs(arch);
  const std::vector<int> outs = layer_outputs(arch);
  Rng rng(derive_seed(seed, streams::kInit));
  for (std::size_t l = 0; l < outs.size(); ++l) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(outs[l], ins[l]);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(outs[l]);
    if (!arch.hidden.empty()) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(ins[l]));
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
          w(i, j) = rng.uniform(-bound, bound);
        }
      }
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.uniform(-bound, bound);
    }
    model.weights.push_back(std::move(w));
    model.biases.push_back(std::move(b));
  }
  return model;
}

void validate_model(const Model& model) {
  if (model.weights.size() != model.biases.size() || model.weights.empty()) {
    throw std::invalid_argument("model: weight/bias layer count mismatch");
  }
  const std::vector<int> ins = layer_inputs(model.arch);
  const std::vector<int> outs = layer_outputs(model.arch);
  if (model.weights.size() != outs.size()) {
    throw std::invalid_argument("model: layer count does not match arch");
  }
  for (std::size_t l = 0; l < outs.size(); ++l) {
    if (model.weights[l].rows() != outs[l] || model.weights[l].cols() != ins[l] ||
        model.biases[l].size() != outs[l]) {
      throw std::invalid_argument("model: layer shape chain broken");
    }
    if (!model.weights[l].allFinite() || !model.biases[l].allFinite()) {
      throw std::invalid_argument("model: non-finite parameter");
    }
  }
}

Eigen::VectorXd logits(const Model& model, const Eigen::VectorXd& x) {
  check_input(model, x);
  return forward(model, x).logits;
}

Eigen::VectorXd predict_proba(const Model& model, const Eigen::VectorXd& x) {
  return softmax(logits(model, x));
}

int predict_class(const Model& model, const Eigen::VectorXd& x) {
  Eigen::Index best = 0;
  logits(model, x).maxCoeff(&best);
  return static_cast<int>(best);
}

double loss(const Model& model, const Eigen::VectorXd& x, int y) {
  if (y < 0 || y >= model.arch.num_classes) {
    throw std::invalid_argument("loss: label outside class range");
  }
  const Eigen::VectorXd z = logits(model, x);
  return log_sum_exp(z) - z[y];
}

double mean_loss(const Model& model, const Dataset& data,
                 const std::vector<int>& idx) {
  double total = 0.0;
  if (idx.empty()) {
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      total += loss(model, data.features.row(i).transpose(),
                    data.labels[static_cast<std::size_t>(i)]);
    }
    return total / static_cast<double>(data.size());
  }
  for (int i : idx) {
    total += loss(model, data.features.row(i).transpose(),
                  data.labels[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<double>(idx.size());
}

double accuracy(const Model& model, const Dataset& data) {
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    if (predict_class(model, data.features.row(i).transpose()) ==
        data.labels[static_cast<std::size_t>(i)]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

Gradients batch_gradient(const Model& model, const Dataset& data,
                         const std::vector<int>& idx) {
  if (idx.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  Gradients grads = zero_gradients(model);
  for (int i : idx) {
    const ForwardTrace trace = forward(model, data.features.row(i).transpose());
    accumulate_example_gradient(model, trace,
                                data.labels[static_cast<std::size_t>(i)], grads);
  }
  grads.scale(1.0 / static_cast<double>(idx.size()));
  return grads;
}

Gradients example_gradient(const Model& model, const Eigen::VectorXd& x, int y) {
  check_input(model, x);
  Gradients grads = zero_gradients(model);
  accumulate_example_gradient(model, forward(model, x), y, grads);
  return grads;
}

void save_model(const Model& model, const std::string& path) {
  json doc;
  doc["format"] = "miup-model";
  doc["version"] = 1;
  doc["arch"] = {{"input_dim", model.arch.input_dim},
                 {"hidden", model.arch.hidden},
                 {"num_classes", model.arch.num_classes}};
  json layers = json::array();
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    json layer;
    layer["rows"] = model.weights[l].rows();
    layer["cols"] = model.weights[l].cols();
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(model.weights[l].size()));
    for (Eigen::Index i = 0; i < model.weights[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < model.weights[l].cols(); ++j) {
        w.push_back(model.weights[l](i, j));
      }
    }
    layer["weights"] = std::move(w);
    layer["biases"] = std::vector<double>(
        model.biases[l].data(), model.biases[l].data() + model.biases[l].size());
    layers.push_back(std::move(layer));
  }
  doc["layers"] = std::move(layers);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model checkpoint: " + path);
  out << doc.dump(2) << "\n";
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model checkpoint: " + path);
  json doc = json::parse(in);
  if (doc.value("format", "") != "miup-model") {
    throw std::runtime_error("not a model checkpoint: " + path);
  }
  Model model;
  model.arch.input_dim = doc["arch"]["input_dim"].get<int>();
  model.arch.hidden = doc["arch"]["hidden"].get<std::vector<int>>();
  model.arch.num_classes = doc["arch"]["num_classes"].get<int>();
  for (const auto& layer : doc["layers"]) {
    const auto rows = layer["rows"].get<Eigen::Index>();
    const auto cols = layer["cols"].get<Eigen::Index>();
    const auto w = layer["weights"].get<std::vector<double>>();
    const auto b = layer["biases"].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
        static_cast<Eigen::Index>(b.size()) != rows) {
      throw std::runtime_error("model checkpoint has inconsistent shapes: " + path);
    }
    Eigen::MatrixXd weight(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        weight(i, j) = w[static_cast<std::size_t>(i * cols + j)];
      }
    }
    model.weights.push_back(std::move(weight));
    model.biases.push_back(
        Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size())));
  }
  validate_model(model);
  return model;
}

}  // namespace miup
