#pragma once

// Euler simulation of a scalar SDE with additive fractional noise, plus the
// increment-augmented view of a path and tangent recursions for pathwise
// parameter derivatives.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fracsde/common.hpp"
#include "fracsde/fbm.hpp"

namespace fracsde {

// Parameter point (xi, sigma, hurst). xi is a vector to leave room for
// multi-parameter drifts; everything shipped here uses a single coordinate.
// free_mask flags which coordinates an optimizer may move, ordered
// xi[0..m-1], sigma, hurst; empty means all free.
struct ThetaVector {
  Eigen::VectorXd xi;
  double sigma = 1.0;
  double hurst = 0.5;
  std::vector<bool> free_mask;

  static ThetaVector scalar(double xi0, double sigma0, double hurst0) {
    ThetaVector t;
    t.xi = Eigen::VectorXd::Constant(1, xi0);
    t.sigma = sigma0;
    t.hurst = hurst0;
    return t;
  }
};

// Drift y -> b_xi(y) together with dissipativity and Lipschitz constants that
// hold uniformly over the xi box the model will be used with. The state is
// scalar; dim is carried so a vector-state extension can slot in without
// touching call sites, but only dim == 1 is implemented.
struct DriftModel {
  int dim = 1;
  int n_xi = 1;
  std::function<double(const Eigen::VectorXd&, double)> eval;
  std::function<double(const Eigen::VectorXd&, double)> jac_y;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)> jac_xi;
  double beta = 0.0;         // (b(x)-b(y))(x-y) <= -beta (x-y)^2
  double lipschitz_K = 0.0;  // |b(x)-b(y)| <= K |x-y|
  int growth_r = 1;          // |b(y)| <= growth_c (1 + |y|^growth_r)
  double growth_c = 0.0;

  // largest step keeping the one-step map a contraction:
  // 1 - 2 g beta + g^2 K^2 <= 1 - g beta < 1 whenever g <= beta / K^2
  double max_step() const {
    if (lipschitz_K <= 0.0) return std::numeric_limits<double>::infinity();
    return beta / (lipschitz_K * lipschitz_K);
  }
};

// Linear mean reversion b(y) = -xi y. The constants are taken over the
// closed box xi in [xi_lo, xi_hi].
inline DriftModel make_ou_drift(double xi_lo, double xi_hi) {
  if (!(xi_lo > 0.0) || !(xi_hi >= xi_lo))
    throw std::invalid_argument("make_ou_drift: need 0 < xi_lo <= xi_hi");
  DriftModel m;
  m.eval = [](const Eigen::VectorXd& xi, double y) { return -xi(0) * y; };
  m.jac_y = [](const Eigen::VectorXd& xi, double) { return -xi(0); };
  m.jac_xi = [](const Eigen::VectorXd&, double y) -> Eigen::VectorXd {
    return Eigen::VectorXd::Constant(1, -y);
  };
  m.beta = xi_lo;
  m.lipschitz_K = xi_hi;
  m.growth_c = xi_hi;
  return m;
}

// Mean reversion with a bounded smooth perturbation:
// b(y) = -xi y + lambda tanh(y). tanh is increasing and 1-Lipschitz, so the
// perturbation costs at most lambda in dissipativity; lambda <= xi_lo / 2
// keeps a comfortable margin.
inline DriftModel make_perturbed_ou_drift(double xi_lo, double xi_hi, double lambda) {
  if (!(xi_lo > 0.0) || !(xi_hi >= xi_lo))
    throw std::invalid_argument("make_perturbed_ou_drift: need 0 < xi_lo <= xi_hi");
  if (!(lambda >= 0.0) || !(lambda <= 0.5 * xi_lo))
    throw std::invalid_argument("make_perturbed_ou_drift: need 0 <= lambda <= xi_lo / 2");
  DriftModel m;
  m.eval = [lambda](const Eigen::VectorXd& xi, double y) { return -xi(0) * y + lambda * std::tanh(y); };
  m.jac_y = [lambda](const Eigen::VectorXd& xi, double y) {
    const double c = std::cosh(y);
    return -xi(0) + lambda / (c * c);
  };
  m.jac_xi = [](const Eigen::VectorXd&, double y) -> Eigen::VectorXd {
    return Eigen::VectorXd::Constant(1, -y);
  };
  m.beta = xi_lo - lambda;
  m.lipschitz_K = xi_hi + lambda;
  m.growth_c = xi_hi + lambda;
  return m;
}

// Scalar path on a uniform grid; values[k] sits at time k * step. theta is
// informational provenance, not used by any algorithm here.
struct Path {
  double step = 0.0;
  std::vector<double> values;
  ThetaVector theta;

  std::size_t size() const { return values.size(); }
};

namespace detail {

inline void check_drift(const DriftModel& drift, const ThetaVector& theta, const char* where) {
  if (drift.dim != 1) throw std::invalid_argument(std::string(where) + ": only scalar state (dim == 1) is implemented");
  if (!drift.eval) throw std::invalid_argument(std::string(where) + ": drift.eval is empty");
  if (theta.xi.size() != drift.n_xi)
    throw std::invalid_argument(std::string(where) + ": theta.xi size does not match drift.n_xi");
}

}  // namespace detail

// One Euler pass along the supplied noise grid:
//   Y_{k+1} = Y_k + step * b_xi(Y_k) + sigma * (B_{k+1} - B_k)
// The step must respect the contraction bound of the drift. Blowing past
// |Y| = 1e12 aborts the pass; that signals a drift that is not dissipative
// over the region visited or a step that is too large.
inline Path euler_simulate(const DriftModel& drift, const ThetaVector& theta, const FbmGrid& noise,
                           double y0 = 0.0) {
  detail::check_drift(drift, theta, "euler_simulate");
  if (!(noise.step > 0.0)) throw std::invalid_argument("euler_simulate: noise.step must be positive");
  if (noise.values.size() != noise.increments.size() + 1)
    throw std::invalid_argument("euler_simulate: noise grid is missing its increments");
  if (!(noise.step <= drift.max_step()))
    throw std::invalid_argument("euler_simulate: step exceeds the contraction bound beta / K^2");

  Path out;
  out.step = noise.step;
  out.theta = theta;
  out.values.resize(noise.values.size());
  double y = y0;
  out.values[0] = y;
  for (std::size_t k = 0; k < noise.increments.size(); ++k) {
    y += noise.step * drift.eval(theta.xi, y) + theta.sigma * noise.increments[k];
    if (!(std::abs(y) <= 1e12))
      throw std::runtime_error("euler_simulate: state magnitude exceeded 1e12");
    out.values[k + 1] = y;
  }
  return out;
}

// Every k0-th point of a fine path, step scaled accordingly.
inline Path subsample(const Path& path, int k0) {
  if (k0 < 1) throw std::invalid_argument("subsample: k0 must be >= 1");
  if (k0 == 1) return path;
  if (path.values.size() <= static_cast<std::size_t>(k0))
    throw std::invalid_argument("subsample: fewer than two output points");
  Path out;
  out.step = path.step * k0;
  out.theta = path.theta;
  out.values.reserve((path.values.size() - 1) / static_cast<std::size_t>(k0) + 1);
  for (std::size_t k = 0; k < path.values.size(); k += static_cast<std::size_t>(k0))
    out.values.push_back(path.values[k]);
  return out;
}

// Rows of the increment-augmented process: row k is
//   (Y_{t_k}, Y_{t_k + h} - Y_{t_k}, ..., Y_{t_k + q h} - Y_{t_k})
// with t_k = k * path.step.
struct AugmentedPath {
  double lag_h = 0.0;
  int q = 0;
  Eigen::MatrixXd rows;  // one observation per row, q + 1 columns

  int dim() const { return q + 1; }
  Eigen::Index count() const { return rows.rows(); }
};

inline AugmentedPath augment(const Path& path, int q, double lag_h) {
  if (q < 0) throw std::invalid_argument("augment: q must be >= 0");
  if (!(lag_h > 0.0)) throw std::invalid_argument("augment: lag_h must be positive");
  if (!(path.step > 0.0)) throw std::invalid_argument("augment: path has no step");
  const double ratio = lag_h / path.step;
  const long stride = std::lround(ratio);
  if (stride < 1 || std::abs(ratio - static_cast<double>(stride)) > 1e-9 * ratio)
    throw std::invalid_argument("augment: lag_h must be an integer multiple of path.step");

  const long skip = static_cast<long>(q) * stride;
  const long n = static_cast<long>(path.values.size()) - skip;
  if (n < 1) throw std::invalid_argument("augment: path too short for the requested lag and q");

  AugmentedPath out;
  out.lag_h = lag_h;
  out.q = q;
  out.rows.resize(n, q + 1);
  for (long k = 0; k < n; ++k) {
    const double base = path.values[static_cast<std::size_t>(k)];
    out.rows(k, 0) = base;
    for (int i = 1; i <= q; ++i)
      out.rows(k, i) = path.values[static_cast<std::size_t>(k + i * stride)] - base;
  }
  return out;
}

// d/d xi of the Euler path, for a single drift parameter:
//   u_{k+1} = u_k + step * (d_xi b(Y_k) + d_y b(Y_k) u_k),  u_0 = 0
inline Path tangent_xi(const DriftModel& drift, const ThetaVector& theta, const Path& base) {
  detail::check_drift(drift, theta, "tangent_xi");
  if (drift.n_xi != 1) throw std::invalid_argument("tangent_xi: only a single drift parameter is implemented");
  if (!drift.jac_y || !drift.jac_xi) throw std::invalid_argument("tangent_xi: drift jacobians are empty");
  if (base.values.empty()) throw std::invalid_argument("tangent_xi: empty base path");
  Path out;
  out.step = base.step;
  out.theta = theta;
  out.values.resize(base.values.size());
  double u = 0.0;
  out.values[0] = u;
  for (std::size_t k = 1; k < base.values.size(); ++k) {
    const double y = base.values[k - 1];
    u += base.step * (drift.jac_xi(theta.xi, y)(0) + drift.jac_y(theta.xi, y) * u);
    out.values[k] = u;
  }
  return out;
}

// d/d sigma of the Euler path:
//   s_{k+1} = s_k + step * d_y b(Y_k) s_k + (B_{k+1} - B_k),  s_0 = 0
inline Path tangent_sigma(const DriftModel& drift, const ThetaVector& theta, const Path& base,
                          const FbmGrid& noise) {
  detail::check_drift(drift, theta, "tangent_sigma");
  if (!drift.jac_y) throw std::invalid_argument("tangent_sigma: drift.jac_y is empty");
  if (noise.increments.size() + 1 != base.values.size())
    throw std::invalid_argument("tangent_sigma: noise grid does not match the base path");
  Path out;
  out.step = base.step;
  out.theta = theta;
  out.values.resize(base.values.size());
  double s = 0.0;
  out.values[0] = s;
  for (std::size_t k = 1; k < base.values.size(); ++k) {
    const double y = base.values[k - 1];
    s += base.step * drift.jac_y(theta.xi, y) * s + noise.increments[k - 1];
    out.values[k] = s;
  }
  return out;
}

// Time units to discard before treating a dissipative path as stationary.
// A fixed multiple of the relaxation time 1/beta, floored for small beta.
inline double burn_in_duration(const DriftModel& drift) {
  if (!(drift.beta > 0.0)) throw std::invalid_argument("burn_in_duration: drift.beta must be positive");
  return std::max(10.0 / drift.beta, 10.0);
}

// Drop the first floor(duration / step) points of a path.
inline Path discard_initial(const Path& path, double duration) {
  if (!(duration >= 0.0)) throw std::invalid_argument("discard_initial: duration must be >= 0");
  if (!(path.step > 0.0)) throw std::invalid_argument("discard_initial: path has no step");
  const std::size_t drop = static_cast<std::size_t>(duration / path.step);
  if (drop >= path.values.size())
    throw std::invalid_argument("discard_initial: nothing left after the burn-in window");
  Path out;
  out.step = path.step;
  out.theta = path.theta;
  out.values.assign(path.values.begin() + static_cast<std::ptrdiff_t>(drop), path.values.end());
  return out;
}

}  // namespace fracsde
