#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "miup/dp_audit.hpp"
#include "miup/experiment.hpp"
#include "miup/mean_lab.hpp"

namespace miup {

// Parsed experiment file for the single/multi/shift commands. The sweep
// axis (n_up, k or alpha) may be a scalar or an array in the file; it is
// expanded to one ExperimentConfig per value.
struct ExperimentFile {
  Instantiation instantiation = Instantiation::SingleUpdate;
  std::vector<ExperimentConfig> runs;
  std::vector<double> sweep_values;  // parallel to runs
  std::string sweep_axis;            // "n_up", "k" or "alpha"
  std::uint64_t seed = 0;
  nlohmann::json raw;
};

struct MeanLabFile {
  mean_lab::MeanWorld world;
  std::vector<int> n1_grid;
  int trials = 0;
  nlohmann::json raw;
};

struct DpAuditFile {
  AuditConfig config;
  nlohmann::json raw;
};

// Throws std::invalid_argument on schema violations, including any key not
// in the documented schema.
ExperimentFile parse_experiment_file(const nlohmann::json& doc,
                                     Instantiation instantiation);
MeanLabFile parse_mean_lab_file(const nlohmann::json& doc);
DpAuditFile parse_dp_audit_file(const nlohmann::json& doc);

nlohmann::json load_json_file(const std::string& path);

// FNV-1a over the canonical (key-sorted) serialization, hex encoded.
// Stable under key reordering in the input file.
std::string config_hash(const nlohmann::json& doc);

struct RunManifest {
  std::string config_hash;
  std::uint64_t root_seed = 0;
  std::string artifact_version;
  std::string created_at;  // the only timestamped output
  std::vector<std::string> output_paths;
};

nlohmann::json manifest_to_json(const RunManifest& manifest);

// Attack spec <-> JSON, reused by config files and exports.
AttackSpec attack_spec_from_json(const nlohmann::json& doc);
nlohmann::json attack_spec_to_json(const AttackSpec& spec);

constexpr int kSchemaVersion = 1;
constexpr const char* kArtifactVersion = "0.1.0";

}  // namespace miup
