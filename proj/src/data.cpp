#include "dualadapt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "dualadapt/error.hpp"
#include "dualadapt/random.hpp"

namespace dualadapt::data {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum StreamTag : std::uint64_t { kCenters = 1, kDraws = 2, kNoise = 3, kSubsample = 4 };

}  // namespace

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ParseError("unknown split '" + s + "'");
}

std::string target_domain_name(std::size_t i) { return "target" + std::to_string(i); }

void DomainShard::validate() const {
  if (inputs.rank() != 2 || inputs.rows() < 1) throw ContractError("shard '" + domain + "' has no rows");
  if (must_be_unlabeled() && labels) {
    throw ContractError("target training shard '" + domain + "' must not carry labels");
  }
  if (!must_be_unlabeled() && !labels) throw ContractError("shard '" + domain + "_" + to_string(split) + "' needs labels");
  if (labels && labels->size() != inputs.rows()) throw ShapeError("label count does not match rows");
}

void ShiftSpec::validate(std::size_t dims) const {
  if (!(scale > 0.0)) throw ContractError("shift scale must be positive");
  if (!(noise >= 0.0)) throw ContractError("shift noise must be non-negative");
  if (!translation.empty() && translation.size() != dims) {
    throw ContractError("translation has " + std::to_string(translation.size()) + " entries for " +
                        std::to_string(dims) + " dims");
  }
}

void BenchmarkSpec::validate() const {
  if (classes < 1 || dims < 1 || per_domain < 1) throw ContractError("benchmark sizes must be >= 1");
  if (shifts.empty()) throw ContractError("benchmark needs at least one target shift");
  if (!(target_fraction > 0.0 && target_fraction <= 1.0)) throw ContractError("target_fraction must be in (0, 1]");
  if (!(center_scale >= 0.0 && cluster_std >= 0.0)) throw ContractError("benchmark spreads must be non-negative");
  for (const auto& s : shifts) s.validate(dims);
}

BenchmarkSpec default_benchmark_spec(std::uint64_t seed) {
  BenchmarkSpec spec;
  spec.seed = seed;
  spec.center_scale = 1.0;
  spec.cluster_std = 0.5;
  // Each target moves by 5 along its own block of four coordinates, so the
  // shifts pull FedAvg in different directions.
  const std::size_t d = spec.dims;
  auto block = [d](std::size_t k, double sign) {
    std::vector<double> t(d, 0.0);
    for (std::size_t j = 4 * k; j < 4 * k + 4 && j < d; ++j) t[j] = sign * 2.5;
    return t;
  };
  spec.shifts = {
      ShiftSpec{0.10, block(0, 1.0), 1.0, 0.1},
      ShiftSpec{-0.15, block(1, -1.0), 1.0, 0.2},
      ShiftSpec{0.20, block(2, 1.0), 1.0, 0.3},
      ShiftSpec{-0.10, block(3, -1.0), 1.0, 0.2},
  };
  return spec;
}

Tensor apply_shift(const Tensor& x, const ShiftSpec& shift, std::uint64_t noise_seed) {
  const std::size_t n = x.rows(), d = x.cols();
  shift.validate(d);
  const double c = std::cos(shift.rotation), s = std::sin(shift.rotation);
  Rng rng(noise_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor out(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j + 1 < d; j += 2) {
      const double a = x.at(i, j), b = x.at(i, j + 1);
      out.at(i, j) = c * a - s * b;
      out.at(i, j + 1) = s * a + c * b;
    }
    if (d % 2 == 1) out.at(i, d - 1) = x.at(i, d - 1);
    for (std::size_t j = 0; j < d; ++j) {
      double v = shift.scale * out.at(i, j);
      if (!shift.translation.empty()) v += shift.translation[j];
      if (shift.noise > 0.0) v += shift.noise * normal(rng);
      out.at(i, j) = v;
    }
  }
  return out;
}

std::vector<std::size_t> stratified_subsample(std::span<const std::size_t> labels, std::size_t num_classes,
                                              double fraction, std::uint64_t seed) {
  const std::size_t n = labels.size();
  const std::size_t total = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < n; ++i) by_class.at(labels[i]).push_back(i);

  std::vector<std::size_t> take(num_classes);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double exact = static_cast<double>(total) * static_cast<double>(by_class[c].size()) / static_cast<double>(n);
    take[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += take[c];
    remainders.emplace_back(-(exact - static_cast<double>(take[c])), c);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i) {
    const std::size_t c = remainders[i].second;
    if (take[c] < by_class[c].size()) {
      ++take[c];
      ++assigned;
    }
  }

  Rng rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& idx = by_class[c];
    std::shuffle(idx.begin(), idx.end(), rng);
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

struct Draws {
  Tensor x;
  std::vector<std::size_t> labels;
};

Draws draw_clean(const Tensor& centers, double cluster_std, std::size_t n, std::uint64_t seed) {
  const std::size_t c = centers.rows(), d = centers.cols();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Draws out{Tensor(Shape{n, d}), std::vector<std::size_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = i % c;
    out.labels[i] = y;
    for (std::size_t j = 0; j < d; ++j) out.x.at(i, j) = centers.at(y, j) + cluster_std * normal(rng);
  }
  return out;
}

}  // namespace

Benchmark gen_benchmark(const BenchmarkSpec& spec) {
  spec.validate();
  const std::size_t n = spec.per_domain;
  Tensor centers(Shape{spec.classes, spec.dims});
  {
    Rng rng = make_rng(spec.seed, {kCenters});
    std::normal_distribution<double> normal(0.0, spec.center_scale);
    for (auto& v : centers.values()) v = normal(rng);
    // Center the class means so shifts act about the source mean.
    for (std::size_t j = 0; j < spec.dims; ++j) {
      double m = 0.0;
      for (std::size_t c = 0; c < spec.classes; ++c) m += centers.at(c, j);
      m /= static_cast<double>(spec.classes);
      for (std::size_t c = 0; c < spec.classes; ++c) centers.at(c, j) -= m;
    }
  }

  Benchmark b;
  b.name = spec.name;
  b.classes = spec.classes;
  auto src_train = draw_clean(centers, spec.cluster_std, n, derive_seed(spec.seed, {kDraws, 0, 0}));
  auto src_test = draw_clean(centers, spec.cluster_std, n, derive_seed(spec.seed, {kDraws, 0, 1}));
  b.source_train = DomainShard{kSourceDomain, Split::train, std::move(src_train.x), std::move(src_train.labels)};
  b.source_test = DomainShard{kSourceDomain, Split::test, std::move(src_test.x), std::move(src_test.labels)};

  for (std::size_t t = 0; t < spec.shifts.size(); ++t) {
    const auto& shift = spec.shifts[t];
    const std::string name = target_domain_name(t);
    auto pool = draw_clean(centers, spec.cluster_std, n, derive_seed(spec.seed, {kDraws, t + 1, 0}));
    auto test = draw_clean(centers, spec.cluster_std, n, derive_seed(spec.seed, {kDraws, t + 1, 1}));
    const Tensor pool_x = apply_shift(pool.x, shift, derive_seed(spec.seed, {kNoise, t + 1, 0}));
    const Tensor test_x = apply_shift(test.x, shift, derive_seed(spec.seed, {kNoise, t + 1, 1}));
    const auto keep = stratified_subsample(pool.labels, spec.classes, spec.target_fraction,
                                           derive_seed(spec.seed, {kSubsample, t + 1}));
    TargetDomain dom;
    dom.train = DomainShard{name, Split::train, take_rows(pool_x, keep), std::nullopt};
    dom.test = DomainShard{name, Split::test, test_x, std::move(test.labels)};
    b.targets.push_back(std::move(dom));
  }
  return b;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void parse_fail(const fs::path& path, std::size_t line, const std::string& field, const std::string& why) {
  throw ParseError(path.string() + ":" + std::to_string(line) + ": " + field + ": " + why);
}

}  // namespace

void save_shard(const DomainShard& shard, const fs::path& path) {
  shard.validate();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const std::size_t d = shard.dims();
  for (std::size_t j = 0; j < d; ++j) out << (j ? "," : "") << 'x' << j;
  if (shard.labels) out << ",label";
  out << '\n';
  for (std::size_t i = 0; i < shard.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out << (j ? "," : "") << format_double(shard.inputs.at(i, j));
    if (shard.labels) out << ',' << (*shard.labels)[i];
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

DomainShard load_shard(const fs::path& path) {
  const std::string stem = path.stem().string();
  const auto cut = stem.rfind('_');
  if (cut == std::string::npos || cut == 0) parse_fail(path, 0, "path", "expected {domain}_{split}.csv");
  Split split;
  try {
    split = split_from_string(stem.substr(cut + 1));
  } catch (const ParseError&) {
    parse_fail(path, 0, "path", "unknown split '" + stem.substr(cut + 1) + "'");
  }
  return load_shard(path, stem.substr(0, cut), split);
}

DomainShard load_shard(const fs::path& path, const std::string& domain, Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.empty()) parse_fail(path, 1, "header", "file is empty");

  const auto header = split_csv(line);
  const bool has_label = header.back() == "label";
  const std::size_t d = header.size() - (has_label ? 1 : 0);
  if (d == 0) parse_fail(path, 1, "header", "no feature columns");
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j] != "x" + std::to_string(j)) parse_fail(path, 1, std::string(header[j]), "expected x" + std::to_string(j));
  }

  DomainShard shard;
  shard.domain = domain;
  shard.split = split;
  if (has_label && shard.must_be_unlabeled()) {
    parse_fail(path, 1, "label", "target training shards must not carry labels");
  }
  if (!has_label && !shard.must_be_unlabeled()) parse_fail(path, 1, "label", "labeled split is missing its label column");

  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      parse_fail(path, lineno, "row", "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < d; ++j) {
      double v = 0.0;
      const auto cell = cells[j];
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        parse_fail(path, lineno, "x" + std::to_string(j), "not a finite number: '" + std::string(cell) + "'");
      }
      values.push_back(v);
    }
    if (has_label) {
      std::size_t y = 0;
      const auto cell = cells[d];
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), y);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        parse_fail(path, lineno, "label", "not a class index: '" + std::string(cell) + "'");
      }
      labels.push_back(y);
    }
  }
  const std::size_t n = values.size() / d;
  if (n == 0) parse_fail(path, lineno, "rows", "shard has no data rows");
  shard.inputs = Tensor(Shape{n, d}, std::move(values));
  if (has_label) shard.labels = std::move(labels);
  shard.validate();
  return shard;
}

fs::path shard_path(const fs::path& benchmark_dir, const std::string& domain, Split split) {
  return benchmark_dir / (domain + "_" + to_string(split) + ".csv");
}

void save_benchmark(const Benchmark& bench, const fs::path& dir) {
  fs::create_directories(dir);
  save_shard(bench.source_train, shard_path(dir, kSourceDomain, Split::train));
  save_shard(bench.source_test, shard_path(dir, kSourceDomain, Split::test));
  for (const auto& t : bench.targets) {
    save_shard(t.train, shard_path(dir, t.train.domain, Split::train));
    save_shard(t.test, shard_path(dir, t.test.domain, Split::test));
  }
}

Benchmark load_benchmark(const fs::path& dir, std::size_t classes) {
  Benchmark b;
  b.name = dir.filename().string();
  b.classes = classes;
  const auto src = shard_path(dir, kSourceDomain, Split::train);
  if (!fs::exists(src)) throw Error("missing shard " + src.string());
  b.source_train = load_shard(src);
  b.source_test = load_shard(shard_path(dir, kSourceDomain, Split::test));
  for (std::size_t i = 0;; ++i) {
    const auto train = shard_path(dir, target_domain_name(i), Split::train);
    if (!fs::exists(train)) break;
    b.targets.push_back(TargetDomain{load_shard(train), load_shard(shard_path(dir, target_domain_name(i), Split::test))});
  }
  if (b.targets.empty()) throw Error("no target shards under " + dir.string());
  auto check_labels = [&](const DomainShard& s) {
    for (auto y : *s.labels)
      if (y >= classes) throw ParseError(s.domain + "_" + to_string(s.split) + ": label " + std::to_string(y) + " out of range");
  };
  check_labels(b.source_train);
  check_labels(b.source_test);
  for (const auto& t : b.targets) check_labels(t.test);
  return b;
}

json to_json(const BenchmarkSpec& s) {
  json shifts = json::array();
  for (const auto& sh : s.shifts) {
    shifts.push_back(json{{"rotation", sh.rotation}, {"translation", sh.translation}, {"scale", sh.scale}, {"noise", sh.noise}});
  }
  return json{{"name", s.name},
              {"classes", s.classes},
              {"dims", s.dims},
              {"per_domain", s.per_domain},
              {"target_fraction", s.target_fraction},
              {"center_scale", s.center_scale},
              {"cluster_std", s.cluster_std},
              {"seed", s.seed},
              {"shifts", shifts}};
}

BenchmarkSpec benchmark_spec_from_json(const json& j) {
  try {
    BenchmarkSpec s = j.value("preset", std::string()) == "default" ? default_benchmark_spec(j.value("seed", 0ULL))
                                                                     : BenchmarkSpec{};
    s.name = j.value("name", s.name);
    s.classes = j.value("classes", s.classes);
    s.dims = j.value("dims", s.dims);
    s.per_domain = j.value("per_domain", s.per_domain);
    s.target_fraction = j.value("target_fraction", s.target_fraction);
    s.center_scale = j.value("center_scale", s.center_scale);
    s.cluster_std = j.value("cluster_std", s.cluster_std);
    s.seed = j.value("seed", s.seed);
    if (j.contains("shifts")) {
      s.shifts.clear();
      for (const auto& sh : j.at("shifts")) {
        ShiftSpec spec;
        spec.rotation = sh.value("rotation", 0.0);
        spec.scale = sh.value("scale", 1.0);
        spec.noise = sh.value("noise", 0.0);
        if (sh.contains("translation")) {
          const auto& t = sh.at("translation");
          if (t.is_number()) {
            spec.translation.assign(s.dims, t.get<double>());
          } else {
            spec.translation = t.get<std::vector<double>>();
          }
        }
        s.shifts.push_back(std::move(spec));
      }
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("benchmark config: ") + e.what());
  }
}

}  // namespace dualadapt::data
