#pragma once

#include <span>
#include <vector>

#include "dualadapt/tape.hpp"
#include "dualadapt/tensor.hpp"

namespace dualadapt::losses {

inline constexpr double kLogEps = 1e-12;

struct LossConfig {
  double lambda_st = 1.0;  // weight of the self-training term
  void validate() const;
};

// Per-example -sum_c y_c log(p_c + eps); [batch].
Var cross_entropy_per_example(Var probs, Var labels);
// Mean over the batch.
Var cross_entropy(Var probs, Var labels);

// Per-example L1 distance between probability rows; [batch], each in [0, 2].
Var discrepancy_per_example(Var p_g, Var p_l);
Var discrepancy(Var p_g, Var p_l);

// One-hot at the row argmax, ties to the lowest class.
Tensor pseudo_labels(const Tensor& p_g);
Tensor one_hot(std::span<const std::size_t> labels, std::size_t num_classes);

// mean_x [ -|p_g - p_l|_1 + lambda_st * w_s(x) * CE(p_l, onehot(argmax p_g)) ].
// p_g is cut from the graph, so only p_l's producers receive gradient.
Var client_objective(Var p_g, Var p_l, const Tensor& w_s, const LossConfig& cfg);

struct ServerTerm {
  Tensor weights;  // w_T^i on the batch, [batch]
  Var p_g;
  Var p_l;
};

// sum_i mean_x [ w_T^i(x) * |p_g - p_l^i|_1 ].
Var server_objective(std::span<const ServerTerm> per_client);

}  // namespace dualadapt::losses
