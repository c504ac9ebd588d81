#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualadapt/tensor.hpp"

namespace dualadapt::density {

inline constexpr double kVarFloor = 1e-6;

struct PcaBasis {
  Tensor mean;        // [d]
  Tensor components;  // [d, r], orthonormal columns
  // Fraction of total variance kept. Not part of the wire payload; 0 after decoding.
  double explained_energy = 0.0;

  std::size_t input_dim() const { return components.shape()[0]; }
  std::size_t rank() const { return components.shape()[1]; }
  // (Z - mean) * components, [n, r].
  Tensor project(const Tensor& z) const;
};

// Smallest-rank basis whose cumulative eigenvalue share reaches min_energy.
// Components are sorted by eigenvalue and signed so their largest-magnitude
// entry is positive.
PcaBasis fit_pca(const Tensor& z, double min_energy = 0.8);

struct GmmParams {
  PcaBasis pca;
  Tensor weights;    // [K]
  Tensor means;      // [K, r]
  Tensor variances;  // [K, r], diagonal

  std::size_t components() const { return weights.size(); }
  // Numbers carried on the wire: mean, components, weights, means, variances.
  std::uint64_t param_count() const;
  void validate() const;
};

struct GmmOptions {
  std::size_t max_iters = 100;
  double tol = 1e-6;
  double min_energy = 0.8;
};

struct GmmFit {
  GmmParams params;
  // Mean log-likelihood of the data, before the first M-step and after each one.
  std::vector<double> log_likelihood;
};

// PCA, then EM with K = 2 * num_classes diagonal components seeded by k-means++.
GmmFit fit_gmm_traced(const Tensor& z, std::size_t num_classes, std::uint64_t seed,
                      const GmmOptions& options = {});
GmmParams fit_gmm(const Tensor& z, std::size_t num_classes, std::uint64_t seed,
                  const GmmOptions& options = {});

double log_density(const GmmParams& gmm, std::span<const double> z);
std::vector<double> log_density(const GmmParams& gmm, const Tensor& z);

// Per-batch min-max normalization of log-densities into [0, 1]. A single
// example, or a batch whose log-densities agree, maps to all ones.
Tensor confidence_weights(const GmmParams& gmm, const Tensor& z);

nlohmann::json to_json(const GmmParams& gmm);
GmmParams gmm_from_json(const nlohmann::json& j);

}  // namespace dualadapt::density
