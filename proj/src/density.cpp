#include "dualadapt/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "dualadapt/error.hpp"
#include "dualadapt/random.hpp"

namespace dualadapt::density {

using nlohmann::json;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// log N(y; mu, diag(var)) + log w for every component.
void component_log_terms(const GmmParams& g, std::span<const double> y, std::vector<double>& out) {
  const std::size_t k = g.components(), r = g.means.cols();
  out.assign(k, kNegInf);
  for (std::size_t c = 0; c < k; ++c) {
    const double w = g.weights[c];
    if (w <= 0.0) continue;
    double lp = std::log(w);
    for (std::size_t j = 0; j < r; ++j) {
      const double var = g.variances.at(c, j);
      const double d = y[j] - g.means.at(c, j);
      lp -= 0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
    }
    out[c] = lp;
  }
}

}  // namespace

Tensor PcaBasis::project(const Tensor& z) const {
  if (z.rank() != 2 || z.cols() != input_dim()) {
    throw ShapeError("pca expects width " + std::to_string(input_dim()) + ", got " + shape_string(z.shape()));
  }
  Tensor centered = z;
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) centered.at(i, j) -= mean[j];
  return matmul(centered, components);
}

PcaBasis fit_pca(const Tensor& z, double min_energy) {
  if (z.rank() != 2) throw ShapeError("fit_pca expects a matrix");
  const std::size_t n = z.rows(), d = z.cols();
  if (n < 2) throw InsufficientDataError("fit_pca needs at least 2 rows, got " + std::to_string(n));
  if (!(min_energy > 0.0 && min_energy <= 1.0)) throw ContractError("min_energy must be in (0, 1]");

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      z.values().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mu;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("covariance eigen-decomposition failed");
  // Ascending order from Eigen; walk it backwards.
  const Eigen::VectorXd evals = solver.eigenvalues();
  const Eigen::MatrixXd evecs = solver.eigenvectors();
  std::vector<double> lambdas(d);
  for (std::size_t i = 0; i < d; ++i) lambdas[i] = std::max(0.0, evals(static_cast<Eigen::Index>(d - 1 - i)));
  double total = 0.0;
  for (double l : lambdas) total += l;

  std::size_t r = 1;
  double kept = lambdas[0];
  if (total > 0.0) {
    const double target = min_energy * total * (1.0 - 1e-12);
    while (kept < target && r < d) kept += lambdas[r++];
  }

  PcaBasis basis;
  basis.mean = Tensor(Shape{d});
  for (std::size_t j = 0; j < d; ++j) basis.mean[j] = mu(static_cast<Eigen::Index>(j));
  basis.components = Tensor(Shape{d, r});
  for (std::size_t c = 0; c < r; ++c) {
    const Eigen::VectorXd v = evecs.col(static_cast<Eigen::Index>(d - 1 - c));
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    const double sign = v(arg) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j) basis.components.at(j, c) = sign * v(static_cast<Eigen::Index>(j));
  }
  basis.explained_energy = total > 0.0 ? std::min(1.0, kept / total) : 1.0;
  return basis;
}

std::uint64_t GmmParams::param_count() const {
  return pca.mean.size() + pca.components.size() + weights.size() + means.size() + variances.size();
}

void GmmParams::validate() const {
  const std::size_t k = weights.size(), r = pca.rank();
  if (pca.mean.size() != pca.input_dim()) throw ShapeError("gmm: pca mean size");
  if (means.shape() != Shape{k, r} || variances.shape() != Shape{k, r}) throw ShapeError("gmm: component shapes");
  double s = 0.0;
  for (double w : weights.values()) {
    if (!(w >= 0.0)) throw ContractError("gmm: negative weight");
    s += w;
  }
  if (std::fabs(s - 1.0) > 1e-10) throw ContractError("gmm: weights do not sum to 1");
  for (double v : variances.values())
    if (!(v >= kVarFloor)) throw ContractError("gmm: variance below floor");
}

GmmFit fit_gmm_traced(const Tensor& z, std::size_t num_classes, std::uint64_t seed, const GmmOptions& options) {
  if (num_classes < 1) throw ContractError("fit_gmm: need at least one class");
  const std::size_t k = 2 * num_classes;
  if (z.rank() != 2) throw ShapeError("fit_gmm expects a matrix");
  const std::size_t n = z.rows();
  if (n < k) {
    throw InsufficientDataError("fit_gmm: " + std::to_string(n) + " rows for " + std::to_string(k) + " components");
  }

  GmmFit fit;
  GmmParams& g = fit.params;
  g.pca = fit_pca(z, options.min_energy);
  const Tensor y = g.pca.project(z);
  const std::size_t r = y.cols();

  // k-means++ seeding.
  Rng rng(seed);
  std::vector<std::size_t> centers;
  centers.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    const auto c = y.row(centers.back());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      auto yi = y.row(i);
      for (std::size_t j = 0; j < r; ++j) s += (yi[j] - c[j]) * (yi[j] - c[j]);
      d2[i] = std::min(d2[i], s);
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (u < d2[i]) {
          pick = i;
          break;
        }
        u -= d2[i];
      }
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    centers.push_back(pick);
  }

  std::vector<double> global_var(r, 0.0), global_mean(r, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < r; ++j) global_mean[j] += y.at(i, j) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < r; ++j) {
      const double d = y.at(i, j) - global_mean[j];
      global_var[j] += d * d / static_cast<double>(n);
    }

  g.weights = Tensor(Shape{k}, 1.0 / static_cast<double>(k));
  g.means = Tensor(Shape{k, r});
  g.variances = Tensor(Shape{k, r});
  for (std::size_t c = 0; c < k; ++c) {
    auto src = y.row(centers[c]);
    for (std::size_t j = 0; j < r; ++j) {
      g.means.at(c, j) = src[j];
      g.variances.at(c, j) = std::max(kVarFloor, global_var[j]);
    }
  }

  Tensor resp(Shape{n, k});
  std::vector<double> terms;
  auto e_step = [&]() {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      component_log_terms(g, y.row(i), terms);
      const double lse = log_sum_exp(terms);
      ll += lse;
      for (std::size_t c = 0; c < k; ++c) resp.at(i, c) = terms[c] == kNegInf ? 0.0 : std::exp(terms[c] - lse);
    }
    return ll / static_cast<double>(n);
  };

  double ll = e_step();
  fit.log_likelihood.push_back(ll);
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    std::vector<double> nk(k, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < k; ++c) nk[c] += resp.at(i, c);
    double nsum = 0.0;
    for (double v : nk) nsum += v;
    for (std::size_t c = 0; c < k; ++c) {
      g.weights[c] = nk[c] / nsum;
      if (nk[c] < 1e-300) continue;  // empty component keeps its last mean/variance
      for (std::size_t j = 0; j < r; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += resp.at(i, c) * y.at(i, j);
        m /= nk[c];
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = y.at(i, j) - m;
          v += resp.at(i, c) * d * d;
        }
        g.means.at(c, j) = m;
        g.variances.at(c, j) = std::max(kVarFloor, v / nk[c]);
      }
    }
    const double next = e_step();
    fit.log_likelihood.push_back(next);
    const bool done = next - ll < options.tol;
    ll = next;
    if (done) break;
  }
  return fit;
}

GmmParams fit_gmm(const Tensor& z, std::size_t num_classes, std::uint64_t seed, const GmmOptions& options) {
  return fit_gmm_traced(z, num_classes, seed, options).params;
}

double log_density(const GmmParams& gmm, std::span<const double> z) {
  Tensor row(Shape{1, z.size()}, std::vector<double>(z.begin(), z.end()));
  return log_density(gmm, row).front();
}

std::vector<double> log_density(const GmmParams& gmm, const Tensor& z) {
  const Tensor y = gmm.pca.project(z);
  std::vector<double> out(y.rows());
  std::vector<double> terms;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    component_log_terms(gmm, y.row(i), terms);
    out[i] = log_sum_exp(terms);
  }
  return out;
}

Tensor confidence_weights(const GmmParams& gmm, const Tensor& z) {
  const auto ld = log_density(gmm, z);
  Tensor w(Shape{ld.size()}, 1.0);
  if (ld.size() < 2) return w;
  const auto [lo, hi] = std::minmax_element(ld.begin(), ld.end());
  const double range = *hi - *lo;
  if (range <= 1e-12 * std::max(1.0, std::fabs(*hi))) return w;
  for (std::size_t i = 0; i < ld.size(); ++i) w[i] = (ld[i] - *lo) / range;
  return w;
}

namespace {

json matrix_json(const Tensor& t) {
  json rows = json::array();
  for (std::size_t i = 0; i < t.rows(); ++i) {
    auto r = t.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

Tensor matrix_from_json(const json& j, std::size_t cols_if_empty) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j[0].size() : cols_if_empty;
  std::vector<double> data;
  for (const auto& r : j) {
    if (r.size() != cols) throw ParseError("gmm json: ragged matrix");
    for (const auto& v : r) data.push_back(v.get<double>());
  }
  return Tensor(Shape{rows, cols}, std::move(data));
}

}  // namespace

json to_json(const GmmParams& g) {
  auto vec = [](const Tensor& t) { return std::vector<double>(t.values().begin(), t.values().end()); };
  return json{{"mean", vec(g.pca.mean)},
              {"components", matrix_json(g.pca.components)},
              {"weights", vec(g.weights)},
              {"means", matrix_json(g.means)},
              {"variances", matrix_json(g.variances)}};
}

GmmParams gmm_from_json(const json& j) {
  try {
    GmmParams g;
    g.pca.mean = Tensor::vector(j.at("mean").get<std::vector<double>>());
    g.pca.components = matrix_from_json(j.at("components"), 0);
    g.weights = Tensor::vector(j.at("weights").get<std::vector<double>>());
    g.means = matrix_from_json(j.at("means"), g.pca.rank());
    g.variances = matrix_from_json(j.at("variances"), g.pca.rank());
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw ParseError(std::string("gmm json: ") + e.what());
  }
}

}  // namespace dualadapt::density
