#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "miup/config.hpp"
#include "miup/dp_audit.hpp"
#include "miup/experiment.hpp"
#include "miup/mean_lab.hpp"
#include "miup/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitRuntimeError = 3;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  int workers = 0;
  std::int64_t seed_override = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON experiment config")->required();
  cmd->add_option("--out", args.out_dir,
                  "Output directory (or set MI_UPDATES_OUT)");
  cmd->add_option("--workers", args.workers, "Concurrent worlds (0 = all cores)");
  cmd->add_option("--seed", args.seed_override, "Override the config root seed");
}

[[noreturn]] void fail(int code, const std::string& kind, const std::string& message,
                       const std::string& path = "") {
  json err;
  err["error"] = kind;
  err["message"] = message;
  if (!path.empty()) err["path"] = path;
  std::cerr << err.dump() << std::endl;
  std::exit(code);
}

fs::path resolve_out_dir(const CommonArgs& args) {
  std::string dir = args.out_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("MI_UPDATES_OUT")) dir = env;
  }
  if (dir.empty()) dir = "out";
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& content,
                std::vector<std::string>& outputs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(kExitRuntimeError, "io", "cannot write output file", path.string());
  out << content;
  outputs.push_back(path.string());
}

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buffer;
}

void write_manifest(const fs::path& dir, const json& raw_config, std::uint64_t seed,
                    const std::vector<std::string>& outputs) {
  miup::RunManifest manifest;
  manifest.config_hash = miup::config_hash(raw_config);
  manifest.root_seed = seed;
  manifest.artifact_version = miup::kArtifactVersion;
  manifest.created_at = timestamp_now();
  manifest.output_paths = outputs;
  std::ofstream out(dir / "manifest.json");
  out << miup::manifest_to_json(manifest).dump(2) << "\n";
}

std::string sweep_label(const std::string& axis, double value) {
  std::ostringstream out;
  out << axis << "_";
  if (value == static_cast<std::int64_t>(value)) {
    out << static_cast<std::int64_t>(value);
  } else {
    out << value;
  }
  return out.str();
}

int run_experiment_command(const CommonArgs& args, miup::Instantiation instantiation) {
  json raw;
  miup::ExperimentFile file;
  try {
    raw = miup::load_json_file(args.config_path);
    file = miup::parse_experiment_file(raw, instantiation);
  } catch (const std::invalid_argument& e) {
    fail(kExitConfigError, "config", e.what(), args.config_path);
  }
  if (args.seed_override >= 0) {
    file.seed = static_cast<std::uint64_t>(args.seed_override);
    for (auto& run : file.runs) run.seed = file.seed;
  }

  const fs::path dir = resolve_out_dir(args);
  std::vector<std::string> outputs;
  json summaries = json::array();
  std::ostringstream sweep_csv;
  sweep_csv.precision(12);
  sweep_csv << file.sweep_axis
            << ",attack,trials,accuracy,precision,recall,generic_accuracy,"
               "specific_accuracy,accuracy_stderr\n";

  try {
    fs::create_directories(dir / "trials");
    fs::create_directories(dir / "decisions");
    for (std::size_t i = 0; i < file.runs.size(); ++i) {
      miup::ExperimentConfig run = file.runs[i];
      run.workers = args.workers;
      const miup::ExperimentResult result = miup::run_experiment(run);

      const std::string label = sweep_label(file.sweep_axis, file.sweep_values[i]);
      write_file(dir / "trials" / (label + ".jsonl"),
                 miup::records_to_jsonl(result.records), outputs);
      write_file(dir / "decisions" / (label + ".csv"),
                 miup::records_to_decision_csv(result.records), outputs);

      json summary = json::parse(miup::result_to_summary_json(result, run));
      summary[file.sweep_axis] = file.sweep_values[i];
      summaries.push_back(summary);

      for (const miup::MetricsReport& report : result.reports) {
        sweep_csv << file.sweep_values[i] << "," << report.attack << ","
                  << report.trials << "," << report.accuracy << ","
                  << report.precision << "," << report.recall << ","
                  << report.generic_accuracy << "," << report.specific_accuracy << ","
                  << miup::binomial_stderr(report.accuracy,
                                           static_cast<std::size_t>(report.trials))
                  << "\n";
      }
    }
  } catch (const std::exception& e) {
    fail(kExitRuntimeError, "runtime", e.what(), args.config_path);
  }

  json summary_doc;
  summary_doc["sweep_axis"] = file.sweep_axis;
  summary_doc["seed"] = file.seed;
  summary_doc["runs"] = std::move(summaries);
  write_file(dir / "summary.json", summary_doc.dump(2) + "\n", outputs);
  write_file(dir / "sweep.csv", sweep_csv.str(), outputs);
  write_manifest(dir, raw, file.seed, outputs);
  return kExitOk;
}

int run_mean_lab_command(const CommonArgs& args) {
  json raw;
  miup::MeanLabFile file;
  try {
    raw = miup::load_json_file(args.config_path);
    file = miup::parse_mean_lab_file(raw);
  } catch (const std::invalid_argument& e) {
    fail(kExitConfigError, "config", e.what(), args.config_path);
  }
  if (args.seed_override >= 0) {
    file.world.seed = static_cast<std::uint64_t>(args.seed_override);
  }
  const fs::path dir = resolve_out_dir(args);
  std::vector<std::string> outputs;
  try {
    const auto rows =
        miup::mean_lab::run_mean_experiment(file.world, file.n1_grid, file.trials);
    write_file(dir / "mean_lab.csv", miup::mean_lab::mean_rows_to_csv(rows), outputs);
    json summary = json::array();
    for (const auto& row : rows) {
      summary.push_back({{"n1", row.n1},
                         {"attack", row.attack},
                         {"trials", row.trials},
                         {"accuracy", row.accuracy},
                         {"stderr", row.stderr_}});
    }
    write_file(dir / "summary.json", summary.dump(2) + "\n", outputs);
  } catch (const std::exception& e) {
    fail(kExitRuntimeError, "runtime", e.what(), args.config_path);
  }
  write_manifest(dir, raw, file.world.seed, outputs);
  return kExitOk;
}

int run_dp_audit_command(const CommonArgs& args) {
  json raw;
  miup::DpAuditFile file;
  try {
    raw = miup::load_json_file(args.config_path);
    file = miup::parse_dp_audit_file(raw);
  } catch (const std::invalid_argument& e) {
    fail(kExitConfigError, "config", e.what(), args.config_path);
  }
  if (args.seed_override >= 0) {
    file.config.seed = static_cast<std::uint64_t>(args.seed_override);
  }
  const fs::path dir = resolve_out_dir(args);
  std::vector<std::string> outputs;
  try {
    const auto results = miup::run_audit(file.config);
    json audit = json::array();
    std::ostringstream csv;
    csv.precision(12);
    csv << "sigma,steps,sampling_rate,delta,epsilon_provable,successes,trials,"
           "confidence,precision,precision_lower,epsilon_lower\n";
    for (const auto& r : results) {
      audit.push_back({{"sigma", r.noise_multiplier},
                       {"steps", r.steps},
                       {"sampling_rate", r.sampling_rate},
                       {"delta", r.delta},
                       {"epsilon_provable", r.epsilon_provable},
                       {"successes", r.successes},
                       {"trials", r.trials},
                       {"confidence", r.confidence},
                       {"precision", r.precision},
                       {"precision_lower", r.precision_lower},
                       {"epsilon_lower", r.epsilon_lower}});
      csv << r.noise_multiplier << "," << r.steps << "," << r.sampling_rate << ","
          << r.delta << "," << r.epsilon_provable << "," << r.successes << ","
          << r.trials << "," << r.confidence << "," << r.precision << ","
          << r.precision_lower << "," << r.epsilon_lower << "\n";
    }
    write_file(dir / "audit.json", audit.dump(2) + "\n", outputs);
    write_file(dir / "audit.csv", csv.str(), outputs);
  } catch (const std::exception& e) {
    fail(kExitRuntimeError, "runtime", e.what(), args.config_path);
  }
  write_manifest(dir, raw, file.config.seed, outputs);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Membership-inference attacks against updated models"};
  app.require_subcommand(1);

  CommonArgs single_args, multi_args, shift_args, mean_args, audit_args;
  CLI::App* single = app.add_subcommand("single", "Single-update experiment");
  add_common(single, single_args);
  CLI::App* multi = app.add_subcommand("multi", "Multi-update experiment");
  add_common(multi, multi_args);
  CLI::App* shift = app.add_subcommand("shift", "Distribution-shift experiment");
  add_common(shift, shift_args);
  CLI::App* mean = app.add_subcommand("mean-lab", "Mean-estimation laboratory");
  add_common(mean, mean_args);
  CLI::App* audit = app.add_subcommand("dp-audit", "DP-SGD epsilon audit");
  add_common(audit, audit_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    json err;
    err["error"] = "usage";
    err["message"] = e.what();
    std::cerr << err.dump() << std::endl;
    return kExitConfigError;
  }

  if (single->parsed()) return run_experiment_command(single_args, miup::Instantiation::SingleUpdate);
  if (multi->parsed()) return run_experiment_command(multi_args, miup::Instantiation::MultiUpdate);
  if (shift->parsed()) return run_experiment_command(shift_args, miup::Instantiation::Shift);
  if (mean->parsed()) return run_mean_lab_command(mean_args);
  if (audit->parsed()) return run_dp_audit_command(audit_args);
  return kExitConfigError;
}
