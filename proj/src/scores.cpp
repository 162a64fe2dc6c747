#include "miup/scores.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>

#include "miup/rng.hpp"

namespace miup {

namespace {

using nlohmann::json;

json model_to_json(const Model& model) {
  json doc;
  doc["arch"] = {{"input_dim", model.arch.input_dim},
                 {"hidden", model.arch.hidden},
                 {"num_classes", model.arch.num_classes}};
  json layers = json::array();
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(model.weights[l].size()));
    for (Eigen::Index i = 0; i < model.weights[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < model.weights[l].cols(); ++j) {
        w.push_back(model.weights[l](i, j));
      }
    }
    layers.push_back(
        {{"rows", model.weights[l].rows()},
         {"cols", model.weights[l].cols()},
         {"weights", std::move(w)},
         {"biases", std::vector<double>(model.biases[l].data(),
                                        model.biases[l].data() +
                                            model.biases[l].size())}});
  }
  doc["layers"] = std::move(layers);
  return doc;
}

Model model_from_json(const json& doc) {
  Model model;
  model.arch.input_dim = doc["arch"]["input_dim"].get<int>();
  model.arch.hidden = doc["arch"]["hidden"].get<std::vector<int>>();
  model.arch.num_classes = doc["arch"]["num_classes"].get<int>();
  for (const auto& layer : doc["layers"]) {
    const auto rows = layer["rows"].get<Eigen::Index>();
    const auto cols = layer["cols"].get<Eigen::Index>();
    const auto w = layer["weights"].get<std::vector<double>>();
    Eigen::MatrixXd weight(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        weight(i, j) = w[static_cast<std::size_t>(i * cols + j)];
      }
    }
    model.weights.push_back(std::move(weight));
    const auto b = layer["biases"].get<std::vector<double>>();
    model.biases.push_back(Eigen::Map<const Eigen::VectorXd>(
        b.data(), static_cast<Eigen::Index>(b.size())));
  }
  validate_model(model);
  return model;
}

}  // namespace

double loss_score(const Eigen::VectorXd& x, int y, const Model& f) {
  return loss(f, x, y);
}

double gap_score(const Eigen::VectorXd& x, int y, const Model& f) {
  return predict_class(f, x) == y ? 0.0 : 1.0;
}

ShadowSet train_shadows(const Sampler& source, const Dataset& pool, int m,
                        const ShadowRecipe& recipe, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("train_shadows: m must be >= 1");
  if (pool.size() < 2 || pool.size() % 2 != 0) {
    throw std::invalid_argument(
        "train_shadows: pool must contain an even number (>= 2) of points");
  }
  if (recipe.base_size < 1) {
    throw std::invalid_argument("train_shadows: base_size must be >= 1");
  }

  ShadowSet set;
  set.pool = pool;
  const auto n = static_cast<std::size_t>(pool.size());
  const std::size_t half = n / 2;

  for (int j = 0; j < m; ++j) {
    const std::uint64_t shadow_seed =
        derive_seed(seed, streams::kShadow, static_cast<std::uint64_t>(j));

    Dataset base = source.draw(recipe.base_size,
                               derive_seed(shadow_seed, streams::kData),
                               "shadow_base");
    TrainConfig base_config = recipe.base_config;
    base_config.seed = derive_seed(shadow_seed, streams::kInit);
    Model pre = train_initial(recipe.arch, base_config, base);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(derive_seed(shadow_seed, streams::kSelect));
    split_rng.shuffle(order);

    Shadow shadow;
    shadow.member.assign(n, 0);
    std::vector<int> half_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
    for (int row : half_rows) shadow.member[static_cast<std::size_t>(row)] = 1;

    UpdateStrategy update = recipe.update;
    update.config.seed = derive_seed(shadow_seed, streams::kEpoch);
    UpdateTrace trace = make_trace(std::move(pre), std::move(base));
    update_model(trace, subset(pool, half_rows), update);

    shadow.pre = trace.models.front();
    shadow.post = trace.models.back();
    set.shadows.push_back(std::move(shadow));
  }
  fit_out_stats(set);
  return set;
}

void fit_out_stats(ShadowSet& set) {
  const auto n = static_cast<std::size_t>(set.pool.size());
  set.out_mean.assign(n, 0.0);
  set.out_std.assign(n, ShadowSet::kStdFloor);
  for (std::size_t p = 0; p < n; ++p) {
    const Eigen::VectorXd x = set.pool.features.row(static_cast<Eigen::Index>(p)).transpose();
    const int y = set.pool.labels[p];
    std::vector<double> losses;
    for (const Shadow& shadow : set.shadows) {
      if (!shadow.member[p]) losses.push_back(loss(shadow.post, x, y));
    }
    if (losses.size() < 2) continue;  // lira_score re-checks and reports
    double mean = 0.0;
    for (double v : losses) mean += v;
    mean /= static_cast<double>(losses.size());
    double var = 0.0;
    for (double v : losses) var += (v - mean) * (v - mean);
    var /= static_cast<double>(losses.size() - 1);
    set.out_mean[p] = mean;
    set.out_std[p] = std::max(std::sqrt(var), ShadowSet::kStdFloor);
  }
}

double lira_z(double target_loss, const std::vector<double>& out_losses) {
  if (out_losses.size() < 2) {
    throw std::invalid_argument("lira_z: fewer than 2 OUT losses");
  }
  double mean = 0.0;
  for (double v : out_losses) mean += v;
  mean /= static_cast<double>(out_losses.size());
  double var = 0.0;
  for (double v : out_losses) var += (v - mean) * (v - mean);
  var /= static_cast<double>(out_losses.size() - 1);
  const double stddev = std::max(std::sqrt(var), ShadowSet::kStdFloor);
  return (target_loss - mean) / stddev;
}

double lira_score(const Eigen::VectorXd& x, int y, const Model& f,
                  const ShadowSet& shadows, std::optional<int> pool_index) {
  if (pool_index.has_value()) {
    const auto p = static_cast<std::size_t>(*pool_index);
    if (p >= static_cast<std::size_t>(shadows.pool.size())) {
      throw std::invalid_argument("lira_score: pool index out of range");
    }
    int out_count = 0;
    for (const Shadow& shadow : shadows.shadows) {
      if (!shadow.member[p]) ++out_count;
    }
    if (out_count < 2) {
      throw std::invalid_argument("lira_score: fewer than 2 OUT shadows for point");
    }
    return (loss(f, x, y) - shadows.out_mean[p]) / shadows.out_std[p];
  }
  if (shadows.size() < 2) {
    throw std::invalid_argument("lira_score: fewer than 2 shadows");
  }
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(shadows.size()));
  for (const Shadow& shadow : shadows.shadows) {
    losses.push_back(loss(shadow.post, x, y));
  }
  return lira_z(loss(f, x, y), losses);
}

void save_shadow_set(const ShadowSet& set, const std::string& path) {
  json doc;
  doc["format"] = "miup-shadows";
  doc["version"] = 1;
  json pool;
  pool["num_classes"] = set.pool.num_classes;
  pool["labels"] = set.pool.labels;
  pool["dim"] = set.pool.dim();
  std::vector<double> feat;
  feat.reserve(static_cast<std::size_t>(set.pool.features.size()));
  for (Eigen::Index i = 0; i < set.pool.size(); ++i) {
    for (Eigen::Index j = 0; j < set.pool.dim(); ++j) {
      feat.push_back(set.pool.features(i, j));
    }
  }
  pool["features"] = std::move(feat);
  doc["pool"] = std::move(pool);
  json shadows = json::array();
  for (const Shadow& shadow : set.shadows) {
    shadows.push_back({{"pre", model_to_json(shadow.pre)},
                       {"post", model_to_json(shadow.post)},
                       {"member", shadow.member}});
  }
  doc["shadows"] = std::move(shadows);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write shadow set: " + path);
  out << doc.dump() << "\n";
}

ShadowSet load_shadow_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open shadow set: " + path);
  json doc = json::parse(in);
  if (doc.value("format", "") != "miup-shadows") {
    throw std::runtime_error("not a shadow set file: " + path);
  }
  ShadowSet set;
  const auto& pool = doc["pool"];
  set.pool.num_classes = pool["num_classes"].get<int>();
  set.pool.labels = pool["labels"].get<std::vector<int>>();
  const auto dim = pool["dim"].get<Eigen::Index>();
  const auto feat = pool["features"].get<std::vector<double>>();
  const auto rows = static_cast<Eigen::Index>(set.pool.labels.size());
  set.pool.features.resize(rows, dim);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      set.pool.features(i, j) = feat[static_cast<std::size_t>(i * dim + j)];
    }
  }
  set.pool.source_tag = "shadow_pool";
  for (const auto& s : doc["shadows"]) {
    Shadow shadow;
    shadow.pre = model_from_json(s["pre"]);
    shadow.post = model_from_json(s["post"]);
    shadow.member = s["member"].get<std::vector<std::uint8_t>>();
    set.shadows.push_back(std::move(shadow));
  }
  fit_out_stats(set);
  return set;
}

}  // namespace miup
