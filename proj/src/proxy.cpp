#include "dualadapt/proxy.hpp"

#include "dualadapt/error.hpp"
#include "dualadapt/random.hpp"

namespace dualadapt::proxy {

Tensor mixup_pair(const Tensor& x_m, const Tensor& x_n) { return scale(add(x_m, x_n), 0.5); }

ProxyBatch build_proxy_batch(const Tensor& source_batch, std::uint64_t seed) {
  const std::size_t b = source_batch.rows();
  if (b < 2) throw InsufficientDataError("proxy batch needs at least 2 source rows");
  const std::size_t d = source_batch.cols();
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> partner(0, b - 2);
  ProxyBatch out;
  out.inputs = Tensor(Shape{b, d});
  out.pairs.reserve(b);
  for (std::size_t m = 0; m < b; ++m) {
    std::size_t n = partner(rng);
    if (n >= m) ++n;  // skip self
    out.pairs.emplace_back(m, n);
    auto xm = source_batch.row(m);
    auto xn = source_batch.row(n);
    for (std::size_t j = 0; j < d; ++j) out.inputs.at(m, j) = (xm[j] + xn[j]) / 2.0;
  }
  return out;
}

Tensor weight_proxy(const density::GmmParams& gmm_t, const nn::ModelParams& g, const ProxyBatch& proxy) {
  return density::confidence_weights(gmm_t, nn::forward_features(g, proxy.inputs));
}

}  // namespace dualadapt::proxy
