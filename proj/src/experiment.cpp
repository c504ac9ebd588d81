#include "dualadapt/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "dualadapt/costs.hpp"
#include "dualadapt/error.hpp"

namespace dualadapt::experiment {

namespace fs = std::filesystem;
using nlohmann::json;
using federation::Method;
using federation::TrainConfig;
using federation::TrainReport;

std::vector<std::string> known_methods() {
  return {"source_only",      "dualadapt",        "dualadapt_mcd",         "dualadapt_st",
          "fed_mcd",          "fed_oracle",       "cent_mcd_one2one",      "cent_mcd_one2combined",
          "cent_mcd_one2multiple"};
}

Method resolve_method(const std::string& name, TrainConfig& cfg) {
  if (name == "dualadapt_mcd") {
    cfg.self_training = false;
    cfg.gmm_weighting = false;
    return Method::dualadapt;
  }
  if (name == "dualadapt_st") {
    cfg.self_training = true;
    cfg.gmm_weighting = false;
    return Method::dualadapt;
  }
  try {
    return federation::method_from_string(name);
  } catch (const ContractError&) {
    throw UsageError("unknown method '" + name + "'");
  }
}

fs::path ExperimentConfig::benchmark_dir() const { return data_dir ? *data_dir : out / "data" / benchmark.name; }

void ExperimentConfig::validate() const {
  if (methods.empty()) throw UsageError("config lists no methods");
  if (seeds.empty()) throw UsageError("config lists no seeds");
  for (const auto& m : methods) {
    TrainConfig scratch = train;
    resolve_method(m, scratch);
  }
  benchmark.validate();
  train.validate();
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("benchmark")) c.benchmark = data::benchmark_spec_from_json(j.at("benchmark"));
    else c.benchmark = data::default_benchmark_spec();
    c.methods = j.value("methods", std::vector<std::string>{});
    if (j.contains("train")) c.train = federation::train_config_from_json(j.at("train"));
    c.out = j.value("out", std::string("results"));
    c.seeds = j.value("seeds", c.seeds);
    if (j.contains("data_dir")) c.data_dir = j.at("data_dir").get<std::string>();
    c.validate();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  } catch (const ContractError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void write_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::vector<fs::path> cmd_generate(const ExperimentConfig& cfg, bool force) {
  cfg.benchmark.validate();
  const fs::path dir = cfg.benchmark_dir();
  const data::Benchmark bench = data::gen_benchmark(cfg.benchmark);
  std::vector<fs::path> files;
  auto add = [&](const data::DomainShard& s) { files.push_back(data::shard_path(dir, s.domain, s.split)); };
  add(bench.source_train);
  add(bench.source_test);
  for (const auto& t : bench.targets) {
    add(t.train);
    add(t.test);
  }
  if (!force) {
    for (const auto& f : files)
      if (fs::exists(f)) throw UsageError(f.string() + " exists; pass --force to overwrite");
  }
  data::save_benchmark(bench, dir);
  return files;
}

TrainReport run_one(const std::string& method, const TrainConfig& train, const data::Benchmark& bench,
                    std::uint64_t seed) {
  TrainConfig cfg = train;
  const Method m = resolve_method(method, cfg);
  cfg.seed = seed;
  auto result = federation::run_method(m, cfg, bench);
  result.report.method = method;
  return std::move(result.report);
}

std::vector<fs::path> cmd_run(const ExperimentConfig& cfg) {
  cfg.validate();
  const data::Benchmark bench = data::load_benchmark(cfg.benchmark_dir(), cfg.benchmark.classes);
  std::vector<fs::path> written;
  for (const auto& method : cfg.methods) {
    for (auto seed : cfg.seeds) {
      const auto report = run_one(method, cfg.train, bench, seed);
      const fs::path path = cfg.run_dir() / (method + "_seed" + std::to_string(seed) + ".json");
      write_atomic(path, report.dump() + "\n");
      written.push_back(path);
    }
  }
  return written;
}

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

namespace {

struct Row {
  std::vector<double> per_target;
  double mean = 0, source = 0, client_flops = 0, upload = 0, broadcast = 0;
};

Row row_of(const TrainReport& r) {
  return Row{r.final_eval.per_target_accuracy,
             r.final_eval.mean_accuracy,
             r.final_eval.source_accuracy,
             static_cast<double>(r.ledger.total_client_flops()),
             static_cast<double>(r.ledger.total_upload()),
             static_cast<double>(r.ledger.total_broadcast())};
}

std::vector<double> flatten(const Row& r, std::size_t targets) {
  std::vector<double> v(targets, std::nan(""));
  std::copy(r.per_target.begin(), r.per_target.end(), v.begin());
  v.insert(v.end(), {r.mean, r.source, r.client_flops, r.upload, r.broadcast});
  return v;
}

}  // namespace

std::string report_csv(const std::vector<TrainReport>& reports) {
  if (reports.empty()) throw Error("no reports to summarize");
  std::size_t targets = 0;
  for (const auto& r : reports) targets = std::max(targets, r.final_eval.per_target_accuracy.size());

  std::vector<std::string> order;
  std::map<std::string, std::vector<const TrainReport*>> by_method;
  for (const auto& r : reports) {
    if (!by_method.contains(r.method)) order.push_back(r.method);
    by_method[r.method].push_back(&r);
  }

  std::ostringstream out;
  out << "method,seed,row";
  for (std::size_t i = 0; i < targets; ++i) out << ",target" << i;
  out << ",mean,source,client_flops,upload_params,broadcast_params\n";
  auto emit = [&](const std::string& method, const std::string& seed, const std::string& kind,
                  const std::vector<double>& v) {
    out << method << ',' << seed << ',' << kind;
    for (double x : v) out << ',' << (std::isnan(x) ? std::string() : format_number(x));
    out << '\n';
  };

  for (const auto& method : order) {
    auto runs = by_method[method];
    std::sort(runs.begin(), runs.end(), [](auto* a, auto* b) { return a->seed < b->seed; });
    std::vector<std::vector<double>> rows;
    for (auto* r : runs) {
      rows.push_back(flatten(row_of(*r), targets));
      emit(method, std::to_string(r->seed), "run", rows.back());
    }
    const std::size_t n = rows.size();
    std::vector<double> mean(rows[0].size(), 0.0), sd(rows[0].size(), 0.0);
    for (std::size_t c = 0; c < mean.size(); ++c) {
      for (const auto& r : rows) mean[c] += r[c];
      mean[c] /= static_cast<double>(n);
      if (n > 1) {
        for (const auto& r : rows) sd[c] += (r[c] - mean[c]) * (r[c] - mean[c]);
        sd[c] = std::sqrt(sd[c] / static_cast<double>(n - 1));
      }
    }
    emit(method, "", "mean", mean);
    emit(method, "", "std", sd);
  }
  return out.str();
}

std::string cmd_report(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw UsageError(run_dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(run_dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  if (files.empty()) throw Error("no reports in " + run_dir.string());
  std::sort(files.begin(), files.end());
  std::vector<TrainReport> reports;
  for (const auto& f : files) {
    std::ifstream in(f);
    try {
      reports.push_back(federation::report_from_json(json::parse(in)));
    } catch (const json::exception& e) {
      throw ParseError(f.string() + ": " + e.what());
    }
  }
  return report_csv(reports);
}

std::string cmd_cost(const json& arch) {
  costs::FlopCosts flops;
  costs::ParamCounts params;
  try {
    if (arch.contains("model")) {
      nn::ModelConfig mc = nn::model_config_from_json(arch.at("model"));
      mc.input_dim = arch.value("input_dim", mc.input_dim);
      mc.num_classes = arch.value("num_classes", mc.num_classes);
      const auto model = nn::init_model(mc);
      const auto g = costs::module_cost(model.feature_extractor);
      const auto f = costs::module_cost(model.classifier);
      flops = {g.flops, f.flops, arch.value("d_flops", std::uint64_t{0})};
      params = {g.params, f.params, arch.value("w", std::uint64_t{0}), arch.value("d_params", std::uint64_t{0})};
    } else {
      const auto& fl = arch.at("flops");
      const auto& pa = arch.at("params");
      flops = {fl.at("g"), fl.at("f"), fl.value("d", std::uint64_t{0})};
      params = {pa.at("g"), pa.at("f"), pa.value("w", std::uint64_t{0}), pa.value("d", std::uint64_t{0})};
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("architecture config: ") + e.what());
  } catch (const ContractError& e) {
    throw UsageError(std::string("architecture config: ") + e.what());
  }
  if (flops.g == 0 || flops.f == 0 || params.g == 0 || params.f == 0)
    throw UsageError("architecture config: module sizes must be positive");
  return costs::cost_table_csv(flops, params);
}

std::string ledger_csv(const std::vector<TrainReport>& reports) {
  std::ostringstream out;
  out << "method,seed,participant,round,flops,examples,upload,broadcast\n";
  for (const auto& r : reports) {
    for (const auto& row : r.ledger.rows) {
      out << r.method << ',' << r.seed << ',' << row.participant << ',' << row.round << ',' << row.training_flops
          << ',' << row.examples << ',' << row.upload_params << ',' << row.broadcast_params << '\n';
    }
  }
  return out.str();
}

}  // namespace dualadapt::experiment
