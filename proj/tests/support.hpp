#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dualadapt/nn.hpp"
#include "dualadapt/random.hpp"
#include "dualadapt/tape.hpp"
#include "dualadapt/tensor.hpp"

namespace testing {

using namespace dualadapt;

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

// Dense stack with random weights and random (non-zero) biases.
inline nn::ModelParams random_dense(const std::vector<std::size_t>& widths, Rng& rng,
                                    nn::Activation act = nn::Activation::relu) {
  auto m = nn::init_dense(widths, act, rng());
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& l : m.layers)
    for (auto& v : l.bias.values()) v = n(rng);
  return m;
}

inline double norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

struct GradCheck {
  double max_rel_error = 0.0;   // over checked models, per parameter tensor
  double max_frozen_abs = 0.0;  // largest analytic gradient entry on frozen models
};

using Objective = std::function<Var(Tape&, const std::vector<nn::TracedModel>&)>;

// Traces every model as trainable, runs backward once, and compares each checked
// model's gradient with central differences of step h. Relative error of a tensor
// is |analytic - numeric| / max(|analytic|, |numeric|) in the 2-norm.
inline GradCheck check_gradients(std::vector<nn::ModelParams> models, const std::vector<bool>& checked,
                                 const Objective& build, double h = 1e-5) {
  std::vector<std::vector<Tensor>> analytic;
  {
    Tape tape;
    std::vector<nn::TracedModel> traced;
    for (const auto& m : models) traced.push_back(nn::trace(tape, m, true));
    Var obj = build(tape, traced);
    tape.backward(obj);
    for (const auto& t : traced) {
      std::vector<Tensor> g;
      for (Var v : t.vars()) g.push_back(tape.grad(v));
      analytic.push_back(std::move(g));
    }
  }
  auto value = [&]() {
    Tape tape;
    std::vector<nn::TracedModel> traced;
    for (const auto& m : models) traced.push_back(nn::trace(tape, m, false));
    return build(tape, traced).value().item();
  };

  GradCheck out;
  for (std::size_t k = 0; k < models.size(); ++k) {
    auto params = nn::parameter_tensors(models[k]);
    for (std::size_t p = 0; p < params.size(); ++p) {
      const auto a = analytic[k][p].values();
      if (!checked[k]) {
        for (double x : a) out.max_frozen_abs = std::max(out.max_frozen_abs, std::abs(x));
        continue;
      }
      std::vector<double> numeric(a.size()), diff(a.size());
      auto vals = params[p]->values();
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double saved = vals[i];
        vals[i] = saved + h;
        const double up = value();
        vals[i] = saved - h;
        const double down = value();
        vals[i] = saved;
        numeric[i] = (up - down) / (2 * h);
        diff[i] = a[i] - numeric[i];
      }
      const double denom = std::max(norm(a), norm(numeric));
      if (denom > 0) out.max_rel_error = std::max(out.max_rel_error, norm(diff) / denom);
    }
  }
  return out;
}

}  // namespace testing
