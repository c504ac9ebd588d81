#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dualadapt/density.hpp"
#include "dualadapt/nn.hpp"
#include "dualadapt/tensor.hpp"

namespace dualadapt::proxy {

// Pairwise source averages standing in for unreachable target data.
struct ProxyBatch {
  Tensor inputs;                                          // [batch, input_dim]
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (m, n) source rows, m != n
};

Tensor mixup_pair(const Tensor& x_m, const Tensor& x_n);

// Row i is the midpoint of source rows i and a uniformly drawn partner j != i.
ProxyBatch build_proxy_batch(const Tensor& source_batch, std::uint64_t seed);

// Confidence of the client's feature density for each proxy example.
Tensor weight_proxy(const density::GmmParams& gmm_t, const nn::ModelParams& g, const ProxyBatch& proxy);

}  // namespace dualadapt::proxy
