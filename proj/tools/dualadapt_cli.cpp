#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dualadapt/error.hpp"
#include "dualadapt/experiment.hpp"

namespace fs = std::filesystem;
using namespace dualadapt;

namespace {

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
  } else {
    experiment::write_atomic(out, text);
    std::cerr << "wrote " << out << '\n';
  }
}

experiment::ExperimentConfig load(const std::string& path, const std::string& out,
                                  const std::optional<std::uint64_t>& seed, bool seed_is_data) {
  auto cfg = experiment::load_config(path);
  if (!out.empty()) cfg.out = out;
  if (seed) {
    if (seed_is_data) cfg.benchmark.seed = *seed;
    else cfg.seeds = {*seed};
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated multi-target domain adaptation experiments"};
  app.require_subcommand(1);

  std::string config, out, report_path;
  bool force = false;
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("generate", "Write benchmark shards");
  gen->add_option("--config", config, "Experiment config JSON")->required();
  gen->add_option("--out", out, "Output root (overrides config)");
  gen->add_option("--seed", seed, "Benchmark seed (overrides config)");
  gen->add_flag("--force", force, "Overwrite existing shards");

  auto* run = app.add_subcommand("run", "Train every method for every seed");
  run->add_option("--config", config, "Experiment config JSON")->required();
  run->add_option("--out", out, "Output root (overrides config)");
  run->add_option("--seed", seed, "Run a single seed");

  std::string run_dir;
  auto* rep = app.add_subcommand("report", "Summarize run reports as CSV");
  rep->add_option("run_dir", run_dir, "Directory of report JSON files")->required();
  rep->add_option("--out", out, "CSV path (default stdout)");

  auto* cost = app.add_subcommand("cost", "Cost table from an architecture, or a run's ledger");
  cost->add_option("--config", config, "Architecture JSON");
  cost->add_option("--report", report_path, "Report JSON; emits its ledger instead");
  cost->add_option("--out", out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      auto cfg = load(config, out, seed, true);
      for (const auto& f : experiment::cmd_generate(cfg, force)) std::cerr << "wrote " << f.string() << '\n';
    } else if (*run) {
      auto cfg = load(config, out, seed, false);
      for (const auto& f : experiment::cmd_run(cfg)) std::cerr << "wrote " << f.string() << '\n';
    } else if (*rep) {
      emit(experiment::cmd_report(run_dir), out);
    } else if (*cost) {
      if (config.empty() == report_path.empty()) throw experiment::UsageError("cost needs exactly one of --config, --report");
      if (!report_path.empty()) {
        std::ifstream in(report_path);
        if (!in) throw Error("cannot read " + report_path);
        emit(experiment::ledger_csv({federation::report_from_json(nlohmann::json::parse(in))}), out);
      } else {
        std::ifstream in(config);
        if (!in) throw experiment::UsageError("cannot read " + config);
        emit(experiment::cmd_cost(nlohmann::json::parse(in)), out);
      }
    }
  } catch (const experiment::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
