#include "miup/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "miup/loaders.hpp"

namespace miup {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& message) {
  throw std::invalid_argument("config: " + message);
}

void check_keys(const json& doc, const std::set<std::string>& allowed,
                const std::string& context) {
  if (!doc.is_object()) config_error(context + " must be an object");
  for (const auto& item : doc.items()) {
    if (!allowed.count(item.key())) {
      config_error("unknown key '" + item.key() + "' in " + context);
    }
  }
}

template <typename T>
T require(const json& doc, const std::string& key, const std::string& context) {
  if (!doc.contains(key)) config_error("missing key '" + key + "' in " + context);
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    config_error("key '" + key + "' in " + context + " has the wrong type");
  }
}

template <typename T>
T optional(const json& doc, const std::string& key, T fallback) {
  if (!doc.contains(key)) return fallback;
  return doc.at(key).get<T>();
}

const json& require_node(const json& doc, const std::string& key,
                         const std::string& context) {
  if (!doc.contains(key)) config_error("missing key '" + key + "' in " + context);
  return doc.at(key);
}

std::shared_ptr<const Sampler> parse_data(const json& doc, const std::string& context) {
  const std::string type = require<std::string>(doc, "type", context);
  if (type == "gaussian") {
    check_keys(doc, {"type", "num_classes", "dim", "sigma", "mean_radius", "means_seed"},
               context);
    const int num_classes = require<int>(doc, "num_classes", context);
    const int dim = require<int>(doc, "dim", context);
    const double sigma = require<double>(doc, "sigma", context);
    const double radius = require<double>(doc, "mean_radius", context);
    const auto means_seed = optional<std::uint64_t>(doc, "means_seed", 1);
    if (num_classes < 2 || dim < 1) {
      config_error(context + ": need num_classes >= 2 and dim >= 1");
    }
    // Class means on the radius sphere, deterministic from means_seed.
    Rng rng(derive_seed(means_seed, streams::kData));
    std::vector<GaussianClassSpec> classes;
    for (int k = 0; k < num_classes; ++k) {
      Eigen::VectorXd direction(dim);
      for (int j = 0; j < dim; ++j) direction[j] = rng.normal();
      direction.normalize();
      classes.push_back({radius * direction, sigma, 0});
    }
    return std::make_shared<GaussianClassSampler>(std::move(classes));
  }
  if (type == "gaussian_explicit") {
    check_keys(doc, {"type", "classes"}, context);
    std::vector<GaussianClassSpec> classes;
    for (const auto& c : doc.at("classes")) {
      check_keys(c, {"mean", "sigma"}, context + ".classes[]");
      const auto mean = require<std::vector<double>>(c, "mean", context);
      GaussianClassSpec spec;
      spec.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(),
                                                    static_cast<Eigen::Index>(mean.size()));
      spec.sigma = require<double>(c, "sigma", context);
      classes.push_back(std::move(spec));
    }
    return std::make_shared<GaussianClassSampler>(std::move(classes));
  }
  if (type == "idx" || type == "csv") {
    Dataset pool;
    if (type == "idx") {
      check_keys(doc, {"type", "images", "labels", "normalize"}, context);
      pool = load_idx(require<std::string>(doc, "images", context),
                      require<std::string>(doc, "labels", context));
    } else {
      check_keys(doc, {"type", "path", "label_column", "normalize"}, context);
      pool = load_csv(require<std::string>(doc, "path", context),
                      require<std::string>(doc, "label_column", context));
    }
    if (optional<bool>(doc, "normalize", false)) {
      for (Eigen::Index j = 0; j < pool.dim(); ++j) {
        const double mean = pool.features.col(j).mean();
        const double stddev = std::sqrt(
            (pool.features.col(j).array() - mean).square().sum() /
            std::max<double>(1.0, static_cast<double>(pool.size() - 1)));
        if (stddev > 0.0) {
          pool.features.col(j) = (pool.features.col(j).array() - mean) / stddev;
        } else {
          pool.features.col(j).setZero();
        }
      }
    }
    return std::make_shared<PoolSampler>(std::move(pool));
  }
  config_error(context + ": unknown data type '" + type + "'");
}

ArchDescriptor parse_arch(const json& doc, const Sampler& data) {
  check_keys(doc, {"hidden"}, "arch");
  ArchDescriptor arch;
  arch.input_dim = data.dim();
  arch.num_classes = data.num_classes();
  arch.hidden = optional<std::vector<int>>(doc, "hidden", {});
  return arch;
}

TrainConfig parse_train(const json& doc, const std::string& context,
                        bool allow_strategy = false) {
  std::set<std::string> allowed = {"learning_rate", "batch_size", "epochs"};
  if (allow_strategy) allowed.insert("strategy");
  check_keys(doc, allowed, context);
  TrainConfig config;
  config.learning_rate = require<double>(doc, "learning_rate", context);
  config.batch_size = require<int>(doc, "batch_size", context);
  config.epochs = require<int>(doc, "epochs", context);
  validate_train_config(config);
  return config;
}

UpdateStrategy parse_update(const json& doc) {
  UpdateStrategy strategy;
  const std::string kind = require<std::string>(doc, "strategy", "update");
  if (kind == "sgd_new") {
    strategy.kind = UpdateKind::SGDNew;
  } else if (kind == "sgd_full") {
    strategy.kind = UpdateKind::SGDFull;
  } else {
    config_error("update.strategy must be 'sgd_new' or 'sgd_full'");
  }
  strategy.config = parse_train(doc, "update", /*allow_strategy=*/true);
  return strategy;
}

template <typename T>
std::vector<T> scalar_or_array(const json& doc, const std::string& key,
                               const std::string& context) {
  const json& value = require_node(doc, key, context);
  if (value.is_array()) {
    auto out = value.get<std::vector<T>>();
    if (out.empty()) config_error(key + " in " + context + " must not be empty");
    return out;
  }
  return {value.get<T>()};
}

}  // namespace

AttackSpec attack_spec_from_json(const json& doc) {
  check_keys(doc,
             {"name", "family", "combiner", "damping", "score", "threshold", "mode",
              "rank_q"},
             "attack");
  AttackSpec spec;
  spec.name = require<std::string>(doc, "name", "attack");
  const std::string family = require<std::string>(doc, "family", "attack");
  if (family == "back_front") {
    spec.family = AttackFamily::BackFront;
  } else if (family == "delta") {
    spec.family = AttackFamily::Delta;
  } else if (family == "baseline_gap") {
    spec.family = AttackFamily::BaselineGap;
  } else if (family == "baseline_loss") {
    spec.family = AttackFamily::BaselineLoss;
  } else if (family == "baseline_lira") {
    spec.family = AttackFamily::BaselineLira;
  } else {
    config_error("attack '" + spec.name + "': unknown family '" + family + "'");
  }

  const std::string combiner = optional<std::string>(doc, "combiner", "diff");
  if (combiner == "diff") {
    spec.combiner.kind = CombinerKind::Diff;
  } else if (combiner == "ratio") {
    spec.combiner.kind = CombinerKind::Ratio;
  } else {
    config_error("attack '" + spec.name + "': unknown combiner '" + combiner + "'");
  }
  spec.combiner.damping = optional<double>(doc, "damping", 1e-6);
  if (!(spec.combiner.damping > 0.0)) {
    config_error("attack '" + spec.name + "': damping must be > 0");
  }

  const std::string score = optional<std::string>(doc, "score", "loss");
  if (score == "loss") {
    spec.score = ScoreKind::Loss;
  } else if (score == "lira") {
    spec.score = ScoreKind::Lira;
  } else {
    config_error("attack '" + spec.name + "': unknown score '" + score + "'");
  }

  const std::string threshold = optional<std::string>(doc, "threshold", "batch");
  if (threshold == "batch") {
    spec.threshold = ThresholdStrategyKind::Batch;
  } else if (threshold == "transfer") {
    spec.threshold = ThresholdStrategyKind::Transfer;
  } else if (threshold == "rank") {
    spec.threshold = ThresholdStrategyKind::Rank;
  } else {
    config_error("attack '" + spec.name + "': unknown threshold '" + threshold + "'");
  }

  const std::string mode = optional<std::string>(doc, "mode", "accuracy");
  if (mode == "accuracy") {
    spec.mode = ThresholdMode::Accuracy;
  } else if (mode == "precision") {
    spec.mode = ThresholdMode::Precision;
  } else {
    config_error("attack '" + spec.name + "': unknown mode '" + mode + "'");
  }

  spec.rank_q = optional<double>(doc, "rank_q", 0.1);
  if (!(spec.rank_q > 0.0 && spec.rank_q < 1.0)) {
    config_error("attack '" + spec.name + "': rank_q must lie in (0,1)");
  }
  return spec;
}

json attack_spec_to_json(const AttackSpec& spec) {
  json doc;
  doc["name"] = spec.name;
  switch (spec.family) {
    case AttackFamily::BackFront: doc["family"] = "back_front"; break;
    case AttackFamily::Delta: doc["family"] = "delta"; break;
    case AttackFamily::BaselineGap: doc["family"] = "baseline_gap"; break;
    case AttackFamily::BaselineLoss: doc["family"] = "baseline_loss"; break;
    case AttackFamily::BaselineLira: doc["family"] = "baseline_lira"; break;
  }
  doc["combiner"] = spec.combiner.kind == CombinerKind::Diff ? "diff" : "ratio";
  doc["damping"] = spec.combiner.damping;
  doc["score"] = spec.score == ScoreKind::Loss ? "loss" : "lira";
  switch (spec.threshold) {
    case ThresholdStrategyKind::Batch: doc["threshold"] = "batch"; break;
    case ThresholdStrategyKind::Transfer: doc["threshold"] = "transfer"; break;
    case ThresholdStrategyKind::Rank: doc["threshold"] = "rank"; break;
  }
  doc["mode"] = spec.mode == ThresholdMode::Accuracy ? "accuracy" : "precision";
  doc["rank_q"] = spec.rank_q;
  return doc;
}

ExperimentFile parse_experiment_file(const json& doc, Instantiation instantiation) {
  std::set<std::string> allowed = {"schema_version", "seed",      "data",
                                   "arch",           "initial",   "update",
                                   "n0",             "n_up",      "worlds",
                                   "challenges_per_world",        "shadows",
                                   "attacks"};
  if (instantiation == Instantiation::MultiUpdate) allowed.insert("k");
  if (instantiation == Instantiation::Shift) {
    allowed.erase("data");
    allowed.insert("data_source");
    allowed.insert("data_target");
    allowed.insert("alpha");
  }
  check_keys(doc, allowed, "experiment config");

  if (require<int>(doc, "schema_version", "experiment config") != kSchemaVersion) {
    config_error("unsupported schema_version");
  }

  ExperimentFile file;
  file.instantiation = instantiation;
  file.seed = require<std::uint64_t>(doc, "seed", "experiment config");
  file.raw = doc;

  std::shared_ptr<const Sampler> source;
  std::shared_ptr<const Sampler> target;
  if (instantiation == Instantiation::Shift) {
    source = parse_data(require_node(doc, "data_source", "experiment config"), "data_source");
    target = parse_data(require_node(doc, "data_target", "experiment config"), "data_target");
  } else {
    source = parse_data(require_node(doc, "data", "experiment config"), "data");
  }

  ExperimentConfig base;
  base.instantiation = instantiation;
  base.initial_dist = source;
  base.update_dist = source;
  base.arch = parse_arch(require_node(doc, "arch", "experiment config"), *source);
  base.initial_config = parse_train(require_node(doc, "initial", "experiment config"), "initial");
  base.update = parse_update(require_node(doc, "update", "experiment config"));
  base.n0 = require<int>(doc, "n0", "experiment config");
  base.worlds = require<int>(doc, "worlds", "experiment config");
  base.challenges_per_world = require<int>(doc, "challenges_per_world",
                                           "experiment config");
  base.shadow_count = optional<int>(doc, "shadows", 8);
  base.seed = file.seed;
  for (const auto& attack : require_node(doc, "attacks", "experiment config")) {
    base.attacks.push_back(attack_spec_from_json(attack));
  }

  if (instantiation == Instantiation::SingleUpdate) {
    file.sweep_axis = "n_up";
    for (int n_up : scalar_or_array<int>(doc, "n_up", "experiment config")) {
      ExperimentConfig run = base;
      run.k = 1;
      run.n_up = n_up;
      file.runs.push_back(std::move(run));
      file.sweep_values.push_back(n_up);
    }
  } else if (instantiation == Instantiation::MultiUpdate) {
    file.sweep_axis = "k";
    base.n_up = require<int>(doc, "n_up", "experiment config");
    for (int k : scalar_or_array<int>(doc, "k", "experiment config")) {
      ExperimentConfig run = base;
      run.k = k;
      file.runs.push_back(std::move(run));
      file.sweep_values.push_back(k);
    }
  } else {
    file.sweep_axis = "alpha";
    base.n_up = require<int>(doc, "n_up", "experiment config");
    for (double alpha : scalar_or_array<double>(doc, "alpha", "experiment config")) {
      if (alpha < 0.0 || alpha > 1.0) config_error("alpha must lie in [0,1]");
      ExperimentConfig run = base;
      run.k = 1;
      MixtureSpec mix{source, target, alpha};
      run.update_dist = std::make_shared<MixtureSampler>(std::move(mix));
      file.runs.push_back(std::move(run));
      file.sweep_values.push_back(alpha);
    }
  }

  for (const ExperimentConfig& run : file.runs) validate_experiment_config(run);
  return file;
}

MeanLabFile parse_mean_lab_file(const json& doc) {
  check_keys(doc, {"schema_version", "seed", "n0", "d", "sigma", "mu", "trials",
                   "n1_grid"},
             "mean-lab config");
  if (require<int>(doc, "schema_version", "mean-lab config") != kSchemaVersion) {
    config_error("unsupported schema_version");
  }
  MeanLabFile file;
  file.raw = doc;
  file.world.seed = require<std::uint64_t>(doc, "seed", "mean-lab config");
  file.world.n0 = require<int>(doc, "n0", "mean-lab config");
  file.world.d = require<int>(doc, "d", "mean-lab config");
  file.world.sigma = require<double>(doc, "sigma", "mean-lab config");
  const double mu = optional<double>(doc, "mu", 0.0);
  file.world.mu = Eigen::VectorXd::Constant(file.world.d, mu);
  file.trials = require<int>(doc, "trials", "mean-lab config");
  file.n1_grid = require<std::vector<int>>(doc, "n1_grid", "mean-lab config");
  if (file.world.n0 < 0 || file.world.d < 1 || !(file.world.sigma > 0.0)) {
    config_error("mean-lab: need n0 >= 0, d >= 1, sigma > 0");
  }
  if (file.trials < 1) config_error("mean-lab: trials must be >= 1");
  for (int n1 : file.n1_grid) {
    if (n1 < 1) config_error("mean-lab: n1 grid entries must be >= 1");
  }
  return file;
}

DpAuditFile parse_dp_audit_file(const json& doc) {
  check_keys(doc, {"schema_version", "seed", "data", "arch", "initial", "update",
                   "n0", "n_up", "clip_norm", "delta", "noise_grid", "worlds",
                   "challenges_per_world", "confidence", "combiner", "damping",
                   "threshold_mode"},
             "dp-audit config");
  if (require<int>(doc, "schema_version", "dp-audit config") != kSchemaVersion) {
    config_error("unsupported schema_version");
  }
  DpAuditFile file;
  file.raw = doc;

  const json& data = require_node(doc, "data", "dp-audit config");
  check_keys(data, {"type", "num_classes", "dim", "sigma", "mean_radius", "means_seed",
                    "classes"},
             "dp-audit data");
  std::shared_ptr<const Sampler> sampler = parse_data(data, "dp-audit data");
  const auto* gaussian = dynamic_cast<const GaussianClassSampler*>(sampler.get());
  if (gaussian == nullptr) {
    config_error("dp-audit currently supports gaussian data only");
  }
  file.config.classes = gaussian->classes();

  file.config.arch = parse_arch(require_node(doc, "arch", "dp-audit config"), *sampler);
  file.config.initial = parse_train(require_node(doc, "initial", "dp-audit config"), "initial");
  file.config.update = parse_update(require_node(doc, "update", "dp-audit config"));
  file.config.n0 = require<int>(doc, "n0", "dp-audit config");
  file.config.n_up = require<int>(doc, "n_up", "dp-audit config");
  file.config.clip_norm = require<double>(doc, "clip_norm", "dp-audit config");
  file.config.delta = optional<double>(doc, "delta", 1e-4);
  file.config.noise_grid = require<std::vector<double>>(doc, "noise_grid",
                                                        "dp-audit config");
  file.config.worlds = require<int>(doc, "worlds", "dp-audit config");
  file.config.challenges_per_world = require<int>(doc, "challenges_per_world",
                                                  "dp-audit config");
  file.config.confidence = optional<double>(doc, "confidence", 0.98);
  const std::string combiner = optional<std::string>(doc, "combiner", "ratio");
  if (combiner == "diff") {
    file.config.combiner.kind = CombinerKind::Diff;
  } else if (combiner == "ratio") {
    file.config.combiner.kind = CombinerKind::Ratio;
  } else {
    config_error("dp-audit: unknown combiner '" + combiner + "'");
  }
  file.config.combiner.damping = optional<double>(doc, "damping", 1e-6);
  const std::string mode = optional<std::string>(doc, "threshold_mode", "precision");
  if (mode == "accuracy") {
    file.config.threshold_mode = ThresholdMode::Accuracy;
  } else if (mode == "precision") {
    file.config.threshold_mode = ThresholdMode::Precision;
  } else {
    config_error("dp-audit: unknown threshold_mode '" + mode + "'");
  }
  file.config.seed = require<std::uint64_t>(doc, "seed", "dp-audit config");

  if (file.config.n0 < 1 || file.config.n_up < 1) {
    config_error("dp-audit: n0 and n_up must be >= 1");
  }
  if (!(file.config.clip_norm > 0.0)) config_error("dp-audit: clip_norm must be > 0");
  if (file.config.noise_grid.empty()) config_error("dp-audit: empty noise grid");
  for (double sigma : file.config.noise_grid) {
    if (sigma < 0.0) config_error("dp-audit: noise multipliers must be >= 0");
  }
  if (!(file.config.confidence > 0.0 && file.config.confidence < 1.0)) {
    config_error("dp-audit: confidence must lie in (0,1)");
  }
  return file;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config: invalid JSON in " + path + ": " + e.what());
  }
}

std::string config_hash(const json& doc) {
  const std::string canonical = doc.dump();  // objects serialize key-sorted
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char c : canonical) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << hash;
  return out.str();
}

json manifest_to_json(const RunManifest& manifest) {
  json doc;
  doc["config_hash"] = manifest.config_hash;
  doc["root_seed"] = manifest.root_seed;
  doc["artifact_version"] = manifest.artifact_version;
  doc["created_at"] = manifest.created_at;
  doc["outputs"] = manifest.output_paths;
  return doc;
}

}  // namespace miup
