#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualadapt/data.hpp"
#include "dualadapt/error.hpp"
#include "dualadapt/federation.hpp"

namespace dualadapt::experiment {

// Bad invocation or config (exit code 1).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Run names beyond the federation methods: ablations of dualadapt.
//   dualadapt_mcd  discrepancy proxy only (no self-training, no GMM weighting)
//   dualadapt_st   adds self-training, still unweighted
federation::Method resolve_method(const std::string& name, federation::TrainConfig& cfg);
std::vector<std::string> known_methods();

struct ExperimentConfig {
  data::BenchmarkSpec benchmark;
  std::vector<std::string> methods;
  federation::TrainConfig train;
  std::filesystem::path out = "results";
  std::vector<std::uint64_t> seeds{0};
  std::optional<std::filesystem::path> data_dir;  // defaults to {out}/data/{benchmark.name}

  std::filesystem::path benchmark_dir() const;
  std::filesystem::path run_dir() const { return out / "runs"; }
  void validate() const;
};

// {"benchmark": {...}, "methods": [...], "train": {...}, "out": "...", "seeds": [...], "data_dir": "..."}
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// Writes {benchmark_dir}/{domain}_{train,test}.csv. Refuses to touch existing
// shards unless force is set. Returns the files written.
std::vector<std::filesystem::path> cmd_generate(const ExperimentConfig& cfg, bool force);

// One report per (method, seed) at {run_dir}/{method}_seed{seed}.json, written
// atomically. Every method name is checked before anything runs.
std::vector<std::filesystem::path> cmd_run(const ExperimentConfig& cfg);

// Report JSON for one run, without touching the filesystem.
federation::TrainReport run_one(const std::string& method, const federation::TrainConfig& train,
                                const data::Benchmark& bench, std::uint64_t seed);

// Comparison CSV over every *.json report in run_dir: one row per (method, seed),
// then mean and std rows per method.
std::string cmd_report(const std::filesystem::path& run_dir);
std::string report_csv(const std::vector<federation::TrainReport>& reports);

// Cost table from {"flops": {"g","f","d"}, "params": {"g","f","w","d"}}, or from
// {"model": {...}, "input_dim", "num_classes", "w", "d_flops", "d_params"}.
std::string cmd_cost(const nlohmann::json& arch);

// Per-participant ledger rows of reports:
// method,participant,round,flops,examples,upload,broadcast.
std::string ledger_csv(const std::vector<federation::TrainReport>& reports);

// Shortest round-trip decimal form.
std::string format_number(double v);

void write_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace dualadapt::experiment
