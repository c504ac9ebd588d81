#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dualadapt/density.hpp"
#include "dualadapt/error.hpp"
#include "support.hpp"

using namespace dualadapt;
using doctest::Approx;

namespace {

// Cyclic Jacobi eigenvalues of a symmetric matrix.
std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1 : -1) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

std::vector<std::vector<double>> covariance(const Tensor& z) {
  const std::size_t n = z.rows(), d = z.cols();
  std::vector<double> mu(d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += z.at(i, j) / n;
  std::vector<std::vector<double>> c(d, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k) c[j][k] += (z.at(i, j) - mu[j]) * (z.at(i, k) - mu[k]) / n;
  return c;
}

// Correlated data: random mixing of independent axes with decaying scales.
Tensor correlated(std::size_t n, std::size_t d, Rng& rng) {
  const Tensor mix = testing::random_tensor(Shape{d, d}, rng);
  Tensor base = testing::random_tensor(Shape{n, d}, rng);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) base.at(i, j) *= std::pow(0.6, static_cast<double>(j));
  return matmul(base, mix);
}

Tensor two_clusters(const std::vector<double>& a, const std::vector<double>& b, std::size_t per, double sd, Rng& rng) {
  const std::size_t d = a.size();
  Tensor z(Shape{2 * per, d});
  std::normal_distribution<double> n(0.0, sd);
  for (std::size_t i = 0; i < 2 * per; ++i)
    for (std::size_t j = 0; j < d; ++j) z.at(i, j) = (i < per ? a[j] : b[j]) + n(rng);
  return z;
}

// log sum_k pi_k N(P(z - mu); m_k, diag v_k), computed directly.
double brute_log_density(const density::GmmParams& g, std::span<const double> z) {
  const std::size_t d = g.pca.input_dim(), r = g.pca.rank();
  std::vector<double> y(r);
  for (std::size_t c = 0; c < r; ++c)
    for (std::size_t j = 0; j < d; ++j) y[c] += (z[j] - g.pca.mean.values()[j]) * g.pca.components.at(j, c);
  double total = 0;
  for (std::size_t k = 0; k < g.components(); ++k) {
    double log_pdf = std::log(g.weights.values()[k]);
    for (std::size_t c = 0; c < r; ++c) {
      const double v = g.variances.at(k, c), diff = y[c] - g.means.at(k, c);
      log_pdf += -0.5 * (std::log(2 * std::numbers::pi * v) + diff * diff / v);
    }
    total += std::exp(log_pdf);
  }
  return std::log(total);
}

}  // namespace

TEST_CASE("PCA keeps one axis for data on a line") {
  Tensor z(Shape{50, 3});
  for (std::size_t i = 0; i < 50; ++i) {
    const double t = static_cast<double>(i) - 24.5;
    z.at(i, 0) = t;
    z.at(i, 1) = 2 * t;
    z.at(i, 2) = -t;
  }
  const auto pca = density::fit_pca(z, 0.8);
  CHECK(pca.rank() == 1);
  CHECK(pca.explained_energy == Approx(1.0));
  const double s = 1 / std::sqrt(6.0);
  CHECK(pca.components.at(0, 0) == Approx(s));
  CHECK(pca.components.at(1, 0) == Approx(2 * s));
  CHECK(pca.components.at(2, 0) == Approx(-s));
}

TEST_CASE("PCA with min energy one keeps every axis of full-rank data") {
  Rng rng(1);
  const auto pca = density::fit_pca(correlated(200, 5, rng), 1.0);
  CHECK(pca.rank() == 5);
}

TEST_CASE("PCA energy matches independent eigenvalues and columns are orthonormal") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Tensor z = correlated(120, 6, rng);
    const auto pca = density::fit_pca(z, 0.8);
    const auto ev = jacobi_eigenvalues(covariance(z));
    double total = 0;
    for (double v : ev) total += v;
    std::size_t k = 0;
    double kept = 0;
    while (kept / total < 0.8) kept += ev[k++];
    CHECK(pca.rank() == k);
    CHECK(pca.explained_energy == Approx(kept / total).epsilon(1e-9));
    CHECK(pca.explained_energy >= 0.8);
    const Tensor gram = matmul(transpose(pca.components), pca.components);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) CHECK(gram.at(i, j) == Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
  }
}

TEST_CASE("PCA edge cases") {
  CHECK_THROWS_AS(density::fit_pca(Tensor(Shape{1, 3})), InsufficientDataError);
  const auto flat = density::fit_pca(Tensor(Shape{10, 3}, 2.0));
  CHECK(flat.rank() == 1);
  CHECK(flat.explained_energy == 1.0);

  Tensor axis(Shape{6, 2});
  for (std::size_t i = 0; i < 6; ++i) axis.at(i, 0) = static_cast<double>(i);
  const auto a = density::fit_pca(axis);
  CHECK(a.rank() == 1);
  CHECK(a.components.at(0, 0) == Approx(1.0));
  CHECK(a.components.at(1, 0) == Approx(0.0));

  // Equal variance on both axes: one component explains half, so both are kept.
  const Tensor iso = Tensor::matrix({{1, 0}, {-1, 0}, {0, 1}, {0, -1}});
  CHECK(density::fit_pca(iso).rank() == 2);
}

TEST_CASE("GMM needs at least K points") {
  Rng rng(3);
  CHECK_THROWS_AS(density::fit_gmm(testing::random_tensor(Shape{7, 3}, rng), 4, 1), InsufficientDataError);
}

TEST_CASE("GMM recovers two separated clusters") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::vector<double> a{5, 5, 0}, b{-5, -5, 0};
    const Tensor z = two_clusters(a, b, 200, 0.3, rng);
    const auto gmm = density::fit_gmm(z, 1, seed);
    REQUIRE(gmm.components() == 2);
    for (const auto& center : {a, b}) {
      const Tensor c = Tensor(Shape{1, 3}, std::vector<double>(center));
      const Tensor y = gmm.pca.project(c);
      double best = 1e300;
      for (std::size_t k = 0; k < 2; ++k) {
        double dist = 0;
        for (std::size_t j = 0; j < gmm.pca.rank(); ++j) dist += std::pow(gmm.means.at(k, j) - y.at(0, j), 2);
        best = std::min(best, std::sqrt(dist));
      }
      CHECK(best < 0.1);
    }
  }
}

TEST_CASE("EM log-likelihood never decreases") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const Tensor z = correlated(150, 5, rng);
    const auto fit = density::fit_gmm_traced(z, 2, seed);
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i)
      CHECK(fit.log_likelihood[i] >= fit.log_likelihood[i - 1] - 1e-9);
  }
}

TEST_CASE("GMM is deterministic per seed") {
  Rng rng(4);
  const Tensor z = correlated(100, 4, rng);
  CHECK(density::to_json(density::fit_gmm(z, 2, 9)) == density::to_json(density::fit_gmm(z, 2, 9)));
}

TEST_CASE("log density matches a direct evaluation") {
  Rng rng(5);
  const Tensor z = correlated(120, 4, rng);
  const auto gmm = density::fit_gmm(z, 2, 1);
  const auto ld = density::log_density(gmm, z);
  for (std::size_t i = 0; i < z.rows(); ++i) CHECK(ld[i] == Approx(brute_log_density(gmm, z.row(i))).epsilon(1e-9));
}

TEST_CASE("variances respect the floor") {
  Tensor z(Shape{40, 2});
  for (std::size_t i = 0; i < 40; ++i) {
    z.at(i, 0) = i < 20 ? 0.0 : 1.0;
    z.at(i, 1) = i < 20 ? 0.0 : 1.0;
  }
  const auto gmm = density::fit_gmm(z, 1, 0);
  for (double v : gmm.variances.values()) CHECK(v >= density::kVarFloor);
  for (double l : density::log_density(gmm, z)) CHECK(std::isfinite(l));
}

TEST_CASE("confidence weights") {
  Rng rng(6);
  const Tensor z = two_clusters({3, 0}, {-3, 0}, 50, 0.5, rng);
  const auto gmm = density::fit_gmm(z, 1, 0);
  CHECK(density::confidence_weights(gmm, Tensor::matrix({{3, 0}})) == Tensor::vector({1.0}));
  CHECK(density::confidence_weights(gmm, Tensor::matrix({{3, 0}, {3, 0}})) == Tensor::vector({1.0, 1.0}));
  CHECK(density::confidence_weights(gmm, Tensor::matrix({{3, 0}, {40, 40}})) == Tensor::vector({1.0, 0.0}));
  const Tensor w = density::confidence_weights(gmm, z);
  CHECK(*std::max_element(w.values().begin(), w.values().end()) == 1.0);
  CHECK(*std::min_element(w.values().begin(), w.values().end()) == 0.0);
}

TEST_CASE("gmm wire round trip and parameter count") {
  Rng rng(8);
  const auto gmm = density::fit_gmm(correlated(80, 4, rng), 2, 3);
  const auto back = density::gmm_from_json(nlohmann::json::parse(density::to_json(gmm).dump()));
  CHECK(back.pca.mean == gmm.pca.mean);
  CHECK(back.pca.components == gmm.pca.components);
  CHECK(back.weights == gmm.weights);
  CHECK(back.means == gmm.means);
  CHECK(back.variances == gmm.variances);
  const std::size_t d = 4, r = gmm.pca.rank(), k = gmm.components();
  CHECK(gmm.param_count() == d + d * r + k + 2 * k * r);
}
