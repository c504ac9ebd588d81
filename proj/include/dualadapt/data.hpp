#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualadapt/tensor.hpp"

namespace dualadapt::data {

enum class Split { train, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

inline const std::string kSourceDomain = "source";
std::string target_domain_name(std::size_t i);

// One participant's examples. Target training shards never carry labels.
struct DomainShard {
  std::string domain;
  Split split = Split::train;
  Tensor inputs;  // [n, d]
  std::optional<std::vector<std::size_t>> labels;

  std::size_t size() const { return inputs.rank() == 2 ? inputs.rows() : 0; }
  std::size_t dims() const { return inputs.rank() == 2 ? inputs.cols() : 0; }
  bool is_source() const { return domain == kSourceDomain; }
  bool must_be_unlabeled() const { return !is_source() && split == Split::train; }
  void validate() const;

  friend bool operator==(const DomainShard&, const DomainShard&) = default;
};

struct ShiftSpec {
  double rotation = 0.0;            // radians, applied in every coordinate pair (0,1), (2,3), ...
  std::vector<double> translation;  // empty means zero
  double scale = 1.0;
  double noise = 0.0;               // stddev of additive isotropic noise

  void validate(std::size_t dims) const;
};

struct BenchmarkSpec {
  std::string name = "default";
  std::size_t classes = 4;
  std::size_t dims = 16;
  std::size_t per_domain = 1000;
  double target_fraction = 0.1;
  double center_scale = 1.0;  // stddev of class centers around the origin
  double cluster_std = 1.0;   // within-class stddev
  std::vector<ShiftSpec> shifts;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TargetDomain {
  DomainShard train;  // unlabeled, target_fraction of per_domain rows
  DomainShard test;   // labeled, per_domain rows
};

struct Benchmark {
  std::string name;
  std::size_t classes = 0;
  DomainShard source_train;
  DomainShard source_test;
  std::vector<TargetDomain> targets;
};

// The four-target shift benchmark used by the experiments and acceptance suite.
BenchmarkSpec default_benchmark_spec(std::uint64_t seed = 0);

Benchmark gen_benchmark(const BenchmarkSpec& spec);

// Applies a shift to clean source-distribution draws (noise drawn from rng).
Tensor apply_shift(const Tensor& x, const ShiftSpec& shift, std::uint64_t noise_seed);

// Per-class allocation of round(n * fraction) rows, largest remainders first.
std::vector<std::size_t> stratified_subsample(std::span<const std::size_t> labels, std::size_t num_classes,
                                              double fraction, std::uint64_t seed);

// CSV with header x0..x{d-1}[,label]; floats in shortest round-trip form.
void save_shard(const DomainShard& shard, const std::filesystem::path& path);
// Domain and split come from the file name "{domain}_{split}.csv".
DomainShard load_shard(const std::filesystem::path& path);
DomainShard load_shard(const std::filesystem::path& path, const std::string& domain, Split split);

std::filesystem::path shard_path(const std::filesystem::path& benchmark_dir, const std::string& domain, Split split);
void save_benchmark(const Benchmark& bench, const std::filesystem::path& benchmark_dir);
Benchmark load_benchmark(const std::filesystem::path& benchmark_dir, std::size_t classes);

nlohmann::json to_json(const BenchmarkSpec& spec);
BenchmarkSpec benchmark_spec_from_json(const nlohmann::json& j);

}  // namespace dualadapt::data
