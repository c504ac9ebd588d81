#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dualadapt/tensor.hpp"

namespace dualadapt {

// Running total of floating-point operations charged by traced passes.
struct FlopCounter {
  std::uint64_t flops = 0;
  void add(std::uint64_t n) { flops += n; }
};

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

// Reverse-mode gradient tape. Nodes are appended in evaluation order, which is
// already a topological order, so backward is a single reverse sweep.
// Confined to one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);
  Var record(Tensor value, bool requires_grad, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Propagates d(objective)/d(node) to every node that depends on a leaf.
  void backward(Var objective);
  // Gradient after backward(); zeros for nodes the objective does not reach.
  Tensor grad(Var v) const;

  void accumulate(Var v, const Tensor& g);

  // Adds `flops` to the attached counter whenever backward passes through v.
  void charge_backward(Var v, std::uint64_t flops);
  void set_flop_counter(FlopCounter* counter) { counter_ = counter; }
  FlopCounter* flop_counter() const { return counter_; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::uint64_t backward_flops = 0;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  FlopCounter* counter_ = nullptr;
};

// d(objective)/d(p) for each p. The objective must be a scalar.
std::vector<Tensor> grad(Var objective, std::span<const Var> params);

// Traced primitives. Each mirrors the plain kernel of the same name.
Var matmul(Var a, Var b);
Var add_row_vector(Var a, Var bias);
Var relu(Var a);
Var tanh(Var a);
Var softmax(Var logits);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// Subgradient 0 at exactly zero.
Var abs(Var a);
// log(a + eps), elementwise.
Var log(Var a, double eps);
// [n, c] -> [n]
Var row_sum(Var a);
Var sum(Var a);
Var mean(Var a);
// Value passes through unchanged; no gradient flows back.
Var stop_gradient(Var a);
// Identity forward, negated gradient backward.
Var reverse_gradient(Var a);

}  // namespace dualadapt
