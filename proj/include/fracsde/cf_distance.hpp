#pragma once

// Characteristic-function distance machinery: the integrable kernel
// g_p(chi) = c_p (1 + |chi|^2)^{-p}, sampling from it, empirical and Gaussian
// characteristic functions, Monte-Carlo and quadrature forms of the squared
// distance, and the 1-D Wasserstein distance.

#include <Eigen/Dense>

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "fracsde/quadrature.hpp"
#include "fracsde/rng.hpp"

namespace fracsde {

// c_p = Gamma(p) / (pi^{d/2} Gamma(p - d/2)), which makes g_p a probability
// density on R^d.
inline double normalizing_constant(double p, int dim) {
  if (dim < 1) throw std::invalid_argument("normalizing_constant: dim must be >= 1");
  if (!(p > 0.5 * dim)) throw std::domain_error("normalizing_constant: need p > dim / 2");
  const double half = 0.5 * dim;
  return boost::math::tgamma(p) / (std::pow(std::numbers::pi, half) * boost::math::tgamma(p - half));
}

struct CFConfig {
  int dim = 1;
  double p = 2.0;
  double c_p = 2.0 / std::numbers::pi;  // cached normalizing_constant(p, dim)
  int mc_samples = 100;
  RngStream rng{};
};

inline CFConfig make_cf_config(int dim, double p, int mc_samples, RngStream stream) {
  if (mc_samples < 1) throw std::invalid_argument("make_cf_config: mc_samples must be >= 1");
  CFConfig cfg;
  cfg.dim = dim;
  cfg.p = p;
  cfg.c_p = normalizing_constant(p, dim);
  cfg.mc_samples = mc_samples;
  cfg.rng = stream;
  return cfg;
}

// One draw chi = R u with u uniform on the sphere and R^2 a ratio of
// independent Gamma(d/2) and Gamma(p - d/2) variables, which puts the density
// of chi exactly at g_p.
inline Eigen::VectorXd sample_gp(const CFConfig& cfg, Rng& rng) {
  if (!(cfg.p > 0.5 * cfg.dim)) throw std::domain_error("sample_gp: need p > dim / 2");
  const double g1 = rng.gamma(0.5 * cfg.dim);
  const double g2 = rng.gamma(cfg.p - 0.5 * cfg.dim);
  const double radius = std::sqrt(g1 / g2);
  std::vector<double> u = rng.sphere(cfg.dim);
  Eigen::VectorXd chi(cfg.dim);
  for (int i = 0; i < cfg.dim; ++i) chi(i) = radius * u[static_cast<std::size_t>(i)];
  return chi;
}

// n draws from g_p, one per row, seeded from cfg.rng.
inline Eigen::MatrixXd sample_gp_batch(const CFConfig& cfg, int n) {
  if (n < 1) throw std::invalid_argument("sample_gp_batch: n must be >= 1");
  Rng rng(cfg.rng);
  Eigen::MatrixXd out(n, cfg.dim);
  for (int k = 0; k < n; ++k) out.row(k) = sample_gp(cfg, rng).transpose();
  return out;
}

// Point cloud representing an empirical measure, one observation per row.
struct EmpiricalMeasure {
  Eigen::MatrixXd points;

  int dim() const { return static_cast<int>(points.cols()); }
  Eigen::Index count() const { return points.rows(); }
};

// (1/n) sum_k exp(i <chi, x_k>)
inline std::complex<double> empirical_cf(const EmpiricalMeasure& measure, const Eigen::VectorXd& chi) {
  if (measure.count() < 1) throw std::invalid_argument("empirical_cf: empty measure");
  if (measure.dim() != chi.size()) throw std::invalid_argument("empirical_cf: dimension mismatch");
  Eigen::ArrayXd phase = (measure.points * chi).array();
  const double re = phase.cos().sum();
  const double im = phase.sin().sum();
  const double n = static_cast<double>(measure.count());
  return {re / n, im / n};
}

// CF of a centered Gaussian: exp(-chi' cov chi / 2)
inline double gaussian_cf(const Eigen::MatrixXd& cov, const Eigen::VectorXd& chi) {
  if (cov.rows() != cov.cols() || cov.rows() != chi.size())
    throw std::invalid_argument("gaussian_cf: dimension mismatch");
  return std::exp(-0.5 * chi.dot(cov * chi));
}

using CFEvaluator = std::function<std::complex<double>(const Eigen::VectorXd&)>;

// Monte-Carlo estimate of the squared distance
//   E_{chi ~ g_p} |cfA(chi) - cfB(chi)|^2
// Deterministic given cfg.rng; reusing one config across calls makes values
// comparable (common random numbers).
inline double cf_distance_sq_mc(const CFEvaluator& cfA, const CFEvaluator& cfB, const CFConfig& cfg) {
  if (!cfA || !cfB) throw std::invalid_argument("cf_distance_sq_mc: empty evaluator");
  Rng rng(cfg.rng);
  double acc = 0.0;
  for (int k = 0; k < cfg.mc_samples; ++k) {
    const Eigen::VectorXd chi = sample_gp(cfg, rng);
    acc += std::norm(cfA(chi) - cfB(chi));
  }
  return acc / static_cast<double>(cfg.mc_samples);
}

using CFEvaluator1D = std::function<std::complex<double>(double)>;

// Deterministic evaluation of the same integral for scalar laws:
//   c_p * integral |cfA(x) - cfB(x)|^2 (1 + x^2)^{-p} dx over the real line.
// Head by adaptive panels, tails by the decaying-integrand transform.
inline double cf_distance_sq_quadrature(const CFEvaluator1D& cfA, const CFEvaluator1D& cfB, double p,
                                        const quad::QuadratureSpec& spec = {}) {
  if (!cfA || !cfB) throw std::invalid_argument("cf_distance_sq_quadrature: empty evaluator");
  const double c_p = normalizing_constant(p, 1);
  auto integrand = [&](double x) {
    return c_p * std::norm(cfA(x) - cfB(x)) * std::pow(1.0 + x * x, -p);
  };
  const double cut = 10.0;
  double head = 0.0;
  for (double lo = -cut; lo < cut - 0.5; lo += 1.0) head += quad::detail::gk_segment(integrand, lo, lo + 1.0, 1e-12);
  const double upper = quad::algebraic_tail(integrand, cut, spec);
  const double lower = quad::algebraic_tail([&](double x) { return integrand(-x); }, cut, spec);
  return head + upper + lower;
}

// Mean of |chi| to the given power under g_p in one dimension; finite when
// power < 2p - 1.
inline double gp_abs_moment_1d(double p, double power, const quad::QuadratureSpec& spec = {}) {
  if (!(power >= 0.0)) throw std::invalid_argument("gp_abs_moment_1d: power must be >= 0");
  if (!(power < 2.0 * p - 1.0)) throw std::domain_error("gp_abs_moment_1d: moment diverges");
  const double c_p = normalizing_constant(p, 1);
  auto integrand = [&](double x) { return 2.0 * c_p * std::pow(x, power) * std::pow(1.0 + x * x, -p); };
  const double cut = 10.0;
  double head = quad::detail::gk_segment(integrand, 0.0, cut, 1e-12);
  return head + quad::algebraic_tail(integrand, cut, spec);
}

// W1 between two empirical measures on the line. Equal sizes use the exact
// sorted coupling; unequal sizes compare quantile functions on a fixed
// uniform grid. Inputs must be sorted ascending.
inline double wasserstein_1d(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein_1d: empty sample");
  if (!std::is_sorted(a.begin(), a.end()) || !std::is_sorted(b.begin(), b.end()))
    throw std::invalid_argument("wasserstein_1d: inputs must be sorted");
  if (a.size() == b.size()) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += std::abs(a[k] - b[k]);
    return acc / static_cast<double>(a.size());
  }
  const int grid = 10000;
  auto quantile = [](const std::vector<double>& s, double u) {
    // left-continuous empirical quantile
    const std::size_t n = s.size();
    std::size_t idx = static_cast<std::size_t>(std::ceil(u * static_cast<double>(n)));
    if (idx == 0) idx = 1;
    if (idx > n) idx = n;
    return s[idx - 1];
  };
  double acc = 0.0;
  for (int j = 0; j < grid; ++j) {
    const double u = (static_cast<double>(j) + 0.5) / grid;
    acc += std::abs(quantile(a, u) - quantile(b, u));
  }
  return acc / grid;
}

}  // namespace fracsde
