#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dualadapt/data.hpp"
#include "dualadapt/error.hpp"

using namespace dualadapt;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<std::vector<double>> centroids(const data::DomainShard& s, std::size_t classes) {
  std::vector<std::vector<double>> c(classes, std::vector<double>(s.dims()));
  std::vector<double> count(classes);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto y = (*s.labels)[i];
    count[y] += 1;
    for (std::size_t j = 0; j < s.dims(); ++j) c[y][j] += s.inputs.at(i, j);
  }
  for (std::size_t y = 0; y < classes; ++y)
    for (auto& v : c[y]) v /= count[y];
  return c;
}

data::BenchmarkSpec small_spec() {
  data::BenchmarkSpec s;
  s.classes = 3;
  s.dims = 4;
  s.per_domain = 300;
  s.shifts = {data::ShiftSpec{0.5, {}, 1.0, 0.1}, data::ShiftSpec{}};
  s.seed = 5;
  return s;
}

}  // namespace

TEST_CASE("generation is deterministic and sized by the fraction") {
  data::BenchmarkSpec s = small_spec();
  s.per_domain = 1000;
  const auto a = data::gen_benchmark(s);
  const auto b = data::gen_benchmark(s);
  CHECK(a.source_train == b.source_train);
  CHECK(a.targets[0].train == b.targets[0].train);
  CHECK(a.targets[0].train.size() == 100);
  CHECK(a.targets[0].test.size() == 1000);
  CHECK_FALSE(a.targets[0].train.labels.has_value());
  CHECK(a.targets[0].test.labels.has_value());
}

TEST_CASE("identity shift without noise keeps the source distribution") {
  data::BenchmarkSpec s = small_spec();
  s.per_domain = 4000;
  const auto b = data::gen_benchmark(s);
  const auto src = centroids(b.source_test, 3);
  const auto tgt = centroids(b.targets[1].test, 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(src[c][j] - tgt[c][j]) < 3 * std::sqrt(2.0 / (4000 / 3.0)));
}

TEST_CASE("rotation by pi negates class centroids in 2-D") {
  data::BenchmarkSpec s;
  s.classes = 2;
  s.dims = 2;
  s.per_domain = 1000;
  s.center_scale = 3.0;
  s.shifts = {data::ShiftSpec{std::acos(-1.0), {}, 1.0, 0.0}};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    s.seed = seed;
    const auto b = data::gen_benchmark(s);
    const auto src = centroids(b.source_test, 2);
    const auto tgt = centroids(b.targets[0].test, 2);
    for (std::size_t c = 0; c < 2; ++c) {
      std::size_t n_c = 0;
      for (auto y : *b.targets[0].test.labels) n_c += y == c;
      const double tol = 3 * s.cluster_std * std::sqrt(2.0 / static_cast<double>(n_c));
      for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(tgt[c][j] + src[c][j]) < tol);
    }
  }
}

TEST_CASE("apply_shift is an exact affine map without noise") {
  const Tensor x = Tensor::matrix({{1, 0, 2}, {0, 1, -1}});
  data::ShiftSpec s{std::acos(0.0), {1, 2, 3}, 2.0, 0.0};
  const Tensor y = data::apply_shift(x, s, 0);
  CHECK(y.at(0, 0) == doctest::Approx(1.0));
  CHECK(y.at(0, 1) == doctest::Approx(4.0));
  CHECK(y.at(0, 2) == doctest::Approx(7.0));
  CHECK(y.at(1, 0) == doctest::Approx(-1.0));
  CHECK(y.at(1, 1) == doctest::Approx(2.0));
  CHECK(y.at(1, 2) == doctest::Approx(1.0));
}

TEST_CASE("invalid shifts and benchmark settings are rejected") {
  data::BenchmarkSpec s = small_spec();
  s.shifts[0].scale = 0.0;
  CHECK_THROWS(data::gen_benchmark(s));
  s = small_spec();
  s.shifts[0].noise = -1.0;
  CHECK_THROWS(data::gen_benchmark(s));
  s = small_spec();
  s.shifts.clear();
  CHECK_THROWS(data::gen_benchmark(s));
  s = small_spec();
  s.target_fraction = 0.0;
  CHECK_THROWS(data::gen_benchmark(s));
}

TEST_CASE("stratified subsample keeps classes balanced") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 1000; ++i) labels.push_back(i % 4);
    const auto keep = data::stratified_subsample(labels, 4, 0.1, seed);
    CHECK(keep.size() == 100);
    std::vector<std::size_t> count(4);
    for (auto i : keep) count[labels[i]]++;
    for (auto c : count) {
      CHECK(c >= 20);
      CHECK(c <= 30);
    }
  }
}

TEST_CASE("generated target shards are class balanced") {
  data::BenchmarkSpec s = data::default_benchmark_spec(3);
  const auto b = data::gen_benchmark(s);
  const double expect = s.per_domain * s.target_fraction / s.classes;
  for (const auto& t : b.targets) {
    std::vector<double> count(s.classes);
    for (auto y : *t.test.labels) count[y]++;
    for (double c : count) CHECK(c > 0);
    CHECK(t.train.size() == static_cast<std::size_t>(std::llround(s.per_domain * s.target_fraction)));
  }
  CHECK(expect >= 10);
}

TEST_CASE("shard csv round trip is bit exact") {
  TempDir dir("dualadapt_data_roundtrip");
  const auto b = data::gen_benchmark(small_spec());
  data::save_benchmark(b, dir.path);
  CHECK(fs::exists(dir.path / "source_train.csv"));
  CHECK(fs::exists(dir.path / "target0_test.csv"));
  const auto back = data::load_benchmark(dir.path, 3);
  CHECK(back.source_train == b.source_train);
  CHECK(back.source_test == b.source_test);
  REQUIRE(back.targets.size() == 2);
  CHECK(back.targets[1].train == b.targets[1].train);
  CHECK(back.targets[1].test == b.targets[1].test);
}

TEST_CASE("malformed shards are rejected") {
  TempDir dir("dualadapt_data_bad");
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream(dir.path / name) << body;
    return dir.path / name;
  };
  CHECK_THROWS_AS(data::load_shard(write("source_train.csv", "")), ParseError);
  CHECK_THROWS_AS(data::load_shard(write("target0_train.csv", "x0,x1,label\n1,2,0\n")), ParseError);
  CHECK_THROWS_AS(data::load_shard(write("source_test.csv", "x0,x1,label\n1,2\n")), ParseError);
  CHECK_THROWS_AS(data::load_shard(write("source_test.csv", "x0,x1,label\n1,abc,0\n")), ParseError);
  CHECK_THROWS_AS(data::load_shard(write("source_test.csv", "x0,x1,label\n1,2,-1\n")), ParseError);
  CHECK_THROWS_AS(data::load_shard(write("source_oops.csv", "x0,x1\n1,2\n")), ParseError);
  try {
    data::load_shard(write("source_test.csv", "x0,x1,label\n1,2,0\n3,x,1\n"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
}

TEST_CASE("benchmark settings json round trip") {
  const auto s = data::default_benchmark_spec(7);
  const auto back = data::benchmark_spec_from_json(data::to_json(s));
  CHECK(data::to_json(back) == data::to_json(s));
  CHECK(back.shifts.size() == 4);
}
