#include "dualadapt/losses.hpp"

#include "dualadapt/error.hpp"

namespace dualadapt::losses {

void LossConfig::validate() const {
  if (!(lambda_st >= 0.0)) throw ContractError("lambda_st must be non-negative");
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape() || a.rank() != 2) {
    throw ShapeError(std::string(what) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

}  // namespace

Var cross_entropy_per_example(Var probs, Var labels) {
  require_same(probs.value(), labels.value(), "cross_entropy");
  return scale(row_sum(mul(labels, log(probs, kLogEps))), -1.0);
}

Var cross_entropy(Var probs, Var labels) { return mean(cross_entropy_per_example(probs, labels)); }

Var discrepancy_per_example(Var p_g, Var p_l) {
  require_same(p_g.value(), p_l.value(), "discrepancy");
  return row_sum(abs(sub(p_g, p_l)));
}

Var discrepancy(Var p_g, Var p_l) { return mean(discrepancy_per_example(p_g, p_l)); }

Tensor one_hot(std::span<const std::size_t> labels, std::size_t num_classes) {
  Tensor out(Shape{labels.size(), num_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw ContractError("label out of range");
    out.at(i, labels[i]) = 1.0;
  }
  return out;
}

Tensor pseudo_labels(const Tensor& p_g) {
  const auto idx = argmax_rows(p_g);
  return one_hot(idx, p_g.cols());
}

Var client_objective(Var p_g, Var p_l, const Tensor& w_s, const LossConfig& cfg) {
  cfg.validate();
  const std::size_t batch = p_l.value().rows();
  if (w_s.rank() != 1 || w_s.size() != batch) throw ShapeError("client_objective: weight vector size");
  for (double w : w_s.values())
    if (!(w >= 0.0 && w <= 1.0)) throw ContractError("client_objective: weight outside [0,1]");

  Tape& tape = *p_l.tape;
  Var frozen = stop_gradient(p_g);
  Var adv = discrepancy_per_example(frozen, p_l);
  Var targets = tape.constant(pseudo_labels(p_g.value()));
  Var st = cross_entropy_per_example(p_l, targets);
  Var weighted = mul(tape.constant(scale(w_s, cfg.lambda_st)), st);
  return mean(sub(weighted, adv));
}

Var server_objective(std::span<const ServerTerm> per_client) {
  if (per_client.empty()) throw ContractError("server_objective needs at least one client");
  Tape& tape = *per_client.front().p_g.tape;
  Var total{};
  bool first = true;
  for (const auto& term : per_client) {
    Var adv = discrepancy_per_example(term.p_g, term.p_l);
    if (term.weights.rank() != 1 || term.weights.size() != adv.value().size()) {
      throw ShapeError("server_objective: weight vector size");
    }
    Var m = mean(mul(tape.constant(term.weights), adv));
    total = first ? m : add(total, m);
    first = false;
  }
  return total;
}

}  // namespace dualadapt::losses
