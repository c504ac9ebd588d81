#include "dualadapt/tape.hpp"

#include <cmath>

#include "dualadapt/error.hpp"

namespace dualadapt {

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::leaf(Tensor value) { return record(std::move(value), true, nullptr); }

Var Tape::constant(Tensor value) { return record(std::move(value), false, nullptr); }

Var Tape::record(Tensor value, bool requires_grad, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError("non-finite value produced on tape");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

void Tape::accumulate(Var v, const Tensor& g) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (g.shape() != n.value.shape()) {
    throw ShapeError("gradient shape " + shape_string(g.shape()) + " for value " +
                     shape_string(n.value.shape()));
  }
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }
}

void Tape::charge_backward(Var v, std::uint64_t flops) { nodes_[v.id].backward_flops += flops; }

void Tape::backward(Var objective) {
  if (objective.tape != this) throw ContractError("objective recorded on a different tape");
  if (nodes_[objective.id].value.size() != 1) {
    throw ContractError("backward needs a scalar objective, got shape " +
                        shape_string(nodes_[objective.id].value.shape()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  Node& root = nodes_[objective.id];
  if (!root.requires_grad) return;
  root.grad = Tensor(root.value.shape(), 1.0);
  root.has_grad = true;
  for (std::size_t i = objective.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.backward_flops && counter_) counter_->add(n.backward_flops);
    if (n.backward) n.backward(*this, n.grad);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  return n.has_grad ? n.grad : Tensor::zeros_like(n.value);
}

std::vector<Tensor> grad(Var objective, std::span<const Var> params) {
  Tape& tape = *objective.tape;
  tape.backward(objective);
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (Var p : params) {
    if (p.tape != &tape) throw ContractError("parameter recorded on a different tape");
    out.push_back(tape.grad(p));
  }
  return out;
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw ContractError("operands live on different tapes");
  return *a.tape;
}

bool any_requires(Tape& t, Var a) { return t.requires_grad(a); }
bool any_requires(Tape& t, Var a, Var b) { return t.requires_grad(a) || t.requires_grad(b); }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  return t.record(matmul(a.value(), b.value()), any_requires(t, a, b), [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, matmul(g, transpose(b.value())));
    if (tp.requires_grad(b)) tp.accumulate(b, matmul(transpose(a.value()), g));
  });
}

Var add_row_vector(Var a, Var bias) {
  Tape& t = same_tape(a, bias);
  return t.record(add_row_vector(a.value(), bias.value()), any_requires(t, a, bias),
                  [a, bias](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(a)) tp.accumulate(a, g);
                    if (tp.requires_grad(bias)) {
                      Tensor gb(Shape{g.cols()});
                      for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g.at(i, j);
                      tp.accumulate(bias, gb);
                    }
                  });
}

Var relu(Var a) {
  Tape& t = *a.tape;
  return t.record(relu(a.value()), any_requires(t, a), [a](Tape& tp, const Tensor& g) {
    Tensor ga = g;
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (!(x[i] > 0.0)) ga[i] = 0.0;
    tp.accumulate(a, ga);
  });
}

Var tanh(Var a) {
  Tape& t = *a.tape;
  Tensor y = tanh(a.value());
  return t.record(y, any_requires(t, a), [a, y](Tape& tp, const Tensor& g) {
    Tensor ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= 1.0 - y[i] * y[i];
    tp.accumulate(a, ga);
  });
}

Var softmax(Var logits) {
  Tape& t = *logits.tape;
  Tensor p = softmax(logits.value());
  return t.record(p, any_requires(t, logits), [logits, p](Tape& tp, const Tensor& g) {
    Tensor gz = Tensor::zeros_like(p);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) dot += g.at(i, j) * p.at(i, j);
      for (std::size_t j = 0; j < p.cols(); ++j) gz.at(i, j) = p.at(i, j) * (g.at(i, j) - dot);
    }
    tp.accumulate(logits, gz);
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  return t.record(add(a.value(), b.value()), any_requires(t, a, b), [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  return t.record(sub(a.value(), b.value()), any_requires(t, a, b), [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(b)) tp.accumulate(b, scale(g, -1.0));
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  return t.record(mul(a.value(), b.value()), any_requires(t, a, b), [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, mul(g, b.value()));
    if (tp.requires_grad(b)) tp.accumulate(b, mul(g, a.value()));
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  return t.record(scale(a.value(), s), any_requires(t, a),
                  [a, s](Tape& tp, const Tensor& g) { tp.accumulate(a, scale(g, s)); });
}

Var abs(Var a) {
  Tape& t = *a.tape;
  Tensor y = Tensor::zeros_like(a.value());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::fabs(a.value()[i]);
  return t.record(std::move(y), any_requires(t, a), [a](Tape& tp, const Tensor& g) {
    Tensor ga = g;
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
      ga[i] *= s;
    }
    tp.accumulate(a, ga);
  });
}

Var log(Var a, double eps) {
  Tape& t = *a.tape;
  Tensor y = Tensor::zeros_like(a.value());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(a.value()[i] + eps);
  return t.record(std::move(y), any_requires(t, a), [a, eps](Tape& tp, const Tensor& g) {
    Tensor ga = g;
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] /= x[i] + eps;
    tp.accumulate(a, ga);
  });
}

Var row_sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  Tensor y(Shape{x.rows()});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) y[i] += x.at(i, j);
  return t.record(std::move(y), any_requires(t, a), [a](Tape& tp, const Tensor& g) {
    const Tensor& x = a.value();
    Tensor ga = Tensor::zeros_like(x);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) ga.at(i, j) = g[i];
    tp.accumulate(a, ga);
  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record(Tensor::scalar(s), any_requires(t, a), [a](Tape& tp, const Tensor& g) {
    tp.accumulate(a, Tensor(a.value().shape(), g.item()));
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var stop_gradient(Var a) { return a.tape->constant(a.value()); }

Var reverse_gradient(Var a) {
  Tape& t = *a.tape;
  return t.record(a.value(), any_requires(t, a),
                  [a](Tape& tp, const Tensor& g) { tp.accumulate(a, scale(g, -1.0)); });
}

}  // namespace dualadapt
