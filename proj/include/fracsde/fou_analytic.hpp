#pragma once

// Stationary law of the Ornstein-Uhlenbeck process driven by fractional
// Brownian motion: dU = -xi U dt + sigma dB^H. The stationary process is a
// centered Gaussian whose autocovariance has the spectral representation
//
//   r(tau) = sigma^2 Gamma(2H+1) sin(pi H)/pi
//            * int_0^inf cos(tau x) x^{1-2H}/(xi^2 + x^2) dx,
//
// with r(0) = sigma^2 H Gamma(2H) xi^{-2H}. This module evaluates r, its
// parameter gradient, the covariance of the increment-augmented vector
// (U_t, U_{t+h}-U_t, ..., U_{t+qh}-U_t), and the sign diagnostics that make
// (xi, sigma, H) identifiable from that law.

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>

#include "fracsde/common.hpp"
#include "fracsde/quadrature.hpp"
#include "fracsde/rng.hpp"

namespace fracsde {

struct OuParams {
  double xi = 2.0;
  double sigma = 0.5;
  double hurst = 0.7;
  double lag_h = 0.1;  // increment lag of the augmented vector
  int q = 2;           // number of increments appended to the state
};

namespace detail {

inline void check_ou_scalars(double xi, double sigma, double hurst, const char* where) {
  if (!(xi > 0.0)) throw std::invalid_argument(std::string(where) + ": xi must be positive");
  if (!(sigma > 0.0)) throw std::invalid_argument(std::string(where) + ": sigma must be positive");
  check_hurst(hurst, where);
}

inline void check_ou_params(const OuParams& p, const char* where) {
  check_ou_scalars(p.xi, p.sigma, p.hurst, where);
  if (!(p.lag_h > 0.0)) throw std::invalid_argument(std::string(where) + ": lag_h must be positive");
  if (p.q < 0) throw std::invalid_argument(std::string(where) + ": q must be >= 0");
}

// The three integral families behind r and its gradient; all are
// ∫_0^∞ trig(omega y) * weight(y) dy with weight
//   plain:       y^{1-2H} / (1+y^2)          (trig = cos)
//   log_weight:  log(y) y^{1-2H} / (1+y^2)   (trig = cos)
//   sine_moment: y^{2-2H} / (1+y^2)          (trig = sin)
enum class FouKernel { plain, log_weight, sine_moment };

inline double fou_kernel_integral(double omega, double hurst, FouKernel kind,
                                  const quad::QuadratureSpec& spec) {
  check_hurst(hurst, "fou_kernel_integral");
  const double c = spec.split_point;
  const double s = 1.0 / (2.0 - 2.0 * hurst);  // y = c u^s removes the y^{1-2H} singularity
  const double power = 1.0 - 2.0 * hurst;

  double head = 0.0;
  switch (kind) {
    case FouKernel::plain: {
      auto f = [&](double u) {
        const double y = c * std::pow(u, s);
        return s * std::pow(c, 2.0 - 2.0 * hurst) * std::cos(omega * y) / (1.0 + y * y);
      };
      head = quad::detail::gk_segment(f, 0.0, 1.0, 1e-12);
      break;
    }
    case FouKernel::log_weight: {
      const double log_c = std::log(c);
      auto f = [&](double u) {
        const double y = c * std::pow(u, s);
        return s * std::pow(c, 2.0 - 2.0 * hurst) * (log_c + s * std::log(u)) * std::cos(omega * y) /
               (1.0 + y * y);
      };
      head = quad::detail::de_segment(f, 0.0, 1.0, 1e-11);
      break;
    }
    case FouKernel::sine_moment: {
      auto f = [&](double y) { return std::sin(omega * y) * std::pow(y, power + 1.0) / (1.0 + y * y); };
      head = omega == 0.0 ? 0.0 : quad::detail::gk_segment(f, 0.0, c, 1e-12);
      break;
    }
  }

  double tail = 0.0;
  switch (kind) {
    case FouKernel::plain:
      tail = quad::oscillatory_tail([&](double y) { return std::pow(y, power) / (1.0 + y * y); }, omega,
                                    quad::Trig::cosine, c, spec);
      break;
    case FouKernel::log_weight:
      tail = quad::oscillatory_tail([&](double y) { return std::log(y) * std::pow(y, power) / (1.0 + y * y); },
                                    omega, quad::Trig::cosine, c, spec);
      break;
    case FouKernel::sine_moment:
      tail = quad::oscillatory_tail([&](double y) { return std::pow(y, power + 1.0) / (1.0 + y * y); }, omega,
                                    quad::Trig::sine, c, spec);
      break;
  }
  return head + tail;
}

}  // namespace detail

// r(0) in closed form
inline double stationary_variance(double xi, double sigma, double hurst) {
  detail::check_ou_scalars(xi, sigma, hurst, "stationary_variance");
  return sigma * sigma * hurst * std::tgamma(2.0 * hurst) * std::pow(xi, -2.0 * hurst);
}

// r(tau) by quadrature of the spectral representation (no closed-form branches)
inline double stationary_autocov(double xi, double sigma, double hurst, double tau,
                                 const quad::QuadratureSpec& spec = {}) {
  detail::check_ou_scalars(xi, sigma, hurst, "stationary_autocov");
  const double omega = xi * std::abs(tau);
  const double j = detail::fou_kernel_integral(omega, hurst, detail::FouKernel::plain, spec);
  const double pi = std::numbers::pi;
  const double amplitude = sigma * sigma * std::tgamma(2.0 * hurst + 1.0) * std::sin(pi * hurst) / pi;
  return amplitude * std::pow(xi, -2.0 * hurst) * j;
}

namespace detail {

struct LagValues {
  double r = 0.0;
  double d_xi = 0.0;
  double d_sigma = 0.0;
  double d_hurst = 0.0;
};

// r(tau) together with its (xi, sigma, H) partials, differentiated under the
// integral sign; the log and sine-moment kernels carry the extra factors
inline LagValues autocov_with_gradient(double xi, double sigma, double hurst, double tau,
                                       const quad::QuadratureSpec& spec) {
  const double pi = std::numbers::pi;
  const double t = std::abs(tau);
  const double omega = xi * t;
  const double j = fou_kernel_integral(omega, hurst, FouKernel::plain, spec);
  const double j_log = fou_kernel_integral(omega, hurst, FouKernel::log_weight, spec);
  const double j_sin = fou_kernel_integral(omega, hurst, FouKernel::sine_moment, spec);

  const double sin_ph = std::sin(pi * hurst);
  const double cos_ph = std::cos(pi * hurst);
  const double gamma_2h1 = std::tgamma(2.0 * hurst + 1.0);
  const double amplitude = sigma * sigma * gamma_2h1 * sin_ph / pi;
  const double damplitude_dh =
      sigma * sigma * gamma_2h1 * (2.0 * boost::math::digamma(2.0 * hurst + 1.0) * sin_ph + pi * cos_ph) / pi;
  const double prefactor = std::pow(xi, -2.0 * hurst);

  LagValues out;
  out.r = amplitude * prefactor * j;
  out.d_sigma = 2.0 * out.r / sigma;
  out.d_xi = amplitude * prefactor * (-(2.0 * hurst / xi) * j - t * j_sin);
  out.d_hurst = prefactor * ((damplitude_dh - 2.0 * std::log(xi) * amplitude) * j - 2.0 * amplitude * j_log);
  return out;
}

// symmetric PSD repair: eigenvalues in [-1e-12*trace, 0) are clamped to zero,
// anything more negative is an error
inline void clamp_psd(Eigen::MatrixXd& m, const char* where) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw std::runtime_error(std::string(where) + ": eigendecomposition failed");
  const double tol = 1e-12 * std::abs(m.trace());
  Eigen::VectorXd vals = eig.eigenvalues();
  bool clamped = false;
  for (int i = 0; i < vals.size(); ++i) {
    if (vals(i) < -tol)
      throw std::runtime_error(std::string(where) + ": covariance has negative eigenvalue " +
                               std::to_string(vals(i)));
    if (vals(i) < 0.0) {
      vals(i) = 0.0;
      clamped = true;
    }
  }
  if (clamped) {
    // rebuilding from eigenvectors loses exact symmetry, restore it
    m = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
    m = 0.5 * (m + m.transpose()).eval();
  }
}

// assemble the (q+1)x(q+1) augmented matrix from per-lag scalars v[i] ~ r(i h);
// the same linear map applies to r and to each of its partials
inline Eigen::MatrixXd assemble_augmented(const std::vector<double>& v) {
  const int dim = static_cast<int>(v.size());
  Eigen::MatrixXd m(dim, dim);
  m(0, 0) = v[0];
  for (int i = 1; i < dim; ++i) {
    m(0, i) = v[i] - v[0];
    m(i, 0) = m(0, i);
    for (int j = i; j < dim; ++j) {
      m(i, j) = v[j - i] - v[i] - v[j] + v[0];
      m(j, i) = m(i, j);
    }
  }
  return m;
}

}  // namespace detail

// Centered Gaussian given by a covariance matrix and a sampling factor with
// cov == factor * factor^T (eigenvector form, not triangular).
struct StationaryGaussian {
  Eigen::MatrixXd cov;
  Eigen::MatrixXd factor;

  // one sample per row
  Eigen::MatrixXd sample(int n, RngStream stream) const {
    if (n < 1) throw std::invalid_argument("StationaryGaussian::sample: n must be >= 1");
    Rng rng(stream);
    const int dim = static_cast<int>(cov.rows());
    Eigen::MatrixXd out(n, dim);
    Eigen::VectorXd z(dim);
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < dim; ++i) z(i) = rng.normal();
      out.row(k) = (factor * z).transpose();
    }
    return out;
  }
};

// Covariance of (U_t, U_{t+h}-U_t, ..., U_{t+qh}-U_t) under the stationary law.
inline StationaryGaussian augmented_cov(const OuParams& p, const quad::QuadratureSpec& spec = {}) {
  detail::check_ou_params(p, "augmented_cov");
  std::vector<double> r(static_cast<std::size_t>(p.q) + 1);
  for (int i = 0; i <= p.q; ++i) r[static_cast<std::size_t>(i)] = stationary_autocov(p.xi, p.sigma, p.hurst, i * p.lag_h, spec);

  StationaryGaussian out;
  out.cov = detail::assemble_augmented(r);
  detail::clamp_psd(out.cov, "augmented_cov");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.cov);
  Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(0.0);
  out.factor = eig.eigenvectors() * vals.cwiseSqrt().asDiagonal();
  return out;
}

struct CovGradient {
  Eigen::MatrixXd d_xi;
  Eigen::MatrixXd d_sigma;
  Eigen::MatrixXd d_hurst;
};

// Entrywise partials of the augmented covariance in (xi, sigma, H).
inline CovGradient grad_augmented_cov(const OuParams& p, const quad::QuadratureSpec& spec = {}) {
  detail::check_ou_params(p, "grad_augmented_cov");
  const std::size_t count = static_cast<std::size_t>(p.q) + 1;
  std::vector<double> d_xi(count);
  std::vector<double> d_sigma(count);
  std::vector<double> d_hurst(count);
  for (int i = 0; i <= p.q; ++i) {
    const detail::LagValues lv = detail::autocov_with_gradient(p.xi, p.sigma, p.hurst, i * p.lag_h, spec);
    d_xi[static_cast<std::size_t>(i)] = lv.d_xi;
    d_sigma[static_cast<std::size_t>(i)] = lv.d_sigma;
    d_hurst[static_cast<std::size_t>(i)] = lv.d_hurst;
  }
  CovGradient out;
  out.d_xi = detail::assemble_augmented(d_xi);
  out.d_sigma = detail::assemble_augmented(d_sigma);
  out.d_hurst = detail::assemble_augmented(d_hurst);
  return out;
}

// (r(0), r(h)): injective in any two of the three parameters when the sign
// diagnostics below hold, which is what makes the estimation well posed.
inline Eigen::Vector2d injectivity_map(const OuParams& p, const quad::QuadratureSpec& spec = {}) {
  detail::check_ou_params(p, "injectivity_map");
  return {stationary_autocov(p.xi, p.sigma, p.hurst, 0.0, spec),
          stationary_autocov(p.xi, p.sigma, p.hurst, p.lag_h, spec)};
}

// --- identifiability diagnostics -------------------------------------------
//
// Each two-parameter case reduces to a scalar monotonicity statement about a
// transform of r(h) along the curve where r(0) is held fixed. The derivatives
// below must keep a strict sign over the parameter box.

// (sigma, H) case: d/dH of sin(pi H) * J(xi h, H) with the H-independent part
// removed through the identity pi cos(pi H) J(0,H) = 2 sin(pi H) Jlog(0,H);
// evaluated as a difference of kernels so the omega -> 0 limit is stable.
inline double sigma_hurst_slope(double xi, double hurst, double lag_h,
                                const quad::QuadratureSpec& spec = {}) {
  detail::check_ou_scalars(xi, 1.0, hurst, "sigma_hurst_slope");
  if (!(lag_h > 0.0)) throw std::invalid_argument("sigma_hurst_slope: lag_h must be positive");
  const double pi = std::numbers::pi;
  const double omega = xi * lag_h;
  const double j0 = detail::fou_kernel_integral(0.0, hurst, detail::FouKernel::plain, spec);
  const double jw = detail::fou_kernel_integral(omega, hurst, detail::FouKernel::plain, spec);
  const double l0 = detail::fou_kernel_integral(0.0, hurst, detail::FouKernel::log_weight, spec);
  const double lw = detail::fou_kernel_integral(omega, hurst, detail::FouKernel::log_weight, spec);
  return 2.0 * std::sin(pi * hurst) * (l0 - lw) - pi * std::cos(pi * hurst) * (j0 - jw);
}

// (xi, H) case: same quantity along the curve xi = (a/(H Gamma(2H)))^{-1/(2H)}
// of constant scaled variance a; the moving xi contributes a sine-moment term.
inline double xi_hurst_slope(double a, double hurst, double lag_h,
                             const quad::QuadratureSpec& spec = {}) {
  if (!(a > 0.0)) throw std::invalid_argument("xi_hurst_slope: a must be positive");
  detail::check_hurst(hurst, "xi_hurst_slope");
  if (!(lag_h > 0.0)) throw std::invalid_argument("xi_hurst_slope: lag_h must be positive");
  const double pi = std::numbers::pi;
  const double log_hg = std::log(hurst * std::tgamma(2.0 * hurst));
  const double xi_a = std::exp(-(std::log(a) - log_hg) / (2.0 * hurst));
  const double dlog_xi = (std::log(a) - log_hg) / (2.0 * hurst * hurst) +
                         (1.0 / hurst + 2.0 * boost::math::digamma(2.0 * hurst)) / (2.0 * hurst);
  const double j_sin = detail::fou_kernel_integral(xi_a * lag_h, hurst, detail::FouKernel::sine_moment, spec);
  return sigma_hurst_slope(xi_a, hurst, lag_h, spec) - std::sin(pi * hurst) * (xi_a * dlog_xi) * lag_h * j_sin;
}

// (xi, sigma) case: d/dxi of the normalized r(h); strictly negative means the
// lag-h correlation pins xi once the variance pins sigma^2 xi^{-2H}.
inline double xi_sigma_slope(double xi, double hurst, double lag_h,
                             const quad::QuadratureSpec& spec = {}) {
  detail::check_ou_scalars(xi, 1.0, hurst, "xi_sigma_slope");
  if (!(lag_h > 0.0)) throw std::invalid_argument("xi_sigma_slope: lag_h must be positive");
  return -lag_h * detail::fou_kernel_integral(xi * lag_h, hurst, detail::FouKernel::sine_moment, spec);
}

// xi at which the stationary variance is flat in H to first order; H cannot be
// read off the variance alone near this value, so boxes should avoid it.
inline double variance_critical_xi(double hurst) {
  detail::check_hurst(hurst, "variance_critical_xi");
  return std::exp(1.0 / (2.0 * hurst) + boost::math::digamma(2.0 * hurst));
}

enum class IdentCase { sigma_hurst, xi_hurst, xi_sigma };

struct GridSpec {
  double lo = 0.0;
  double hi = 1.0;
  int points = 26;
};

struct MarginInputs {
  GridSpec xi_grid{1.0, 3.0, 26};
  GridSpec hurst_grid{0.55, 0.8, 26};
  double xi_fixed = 2.0;     // known xi in the (sigma, H) case
  double hurst_fixed = 0.7;  // known H in the (xi, sigma) case
  double lag_h = 0.05;
};

struct MarginReport {
  IdentCase which = IdentCase::sigma_hurst;
  double worst_slope = 0.0;  // min of the positive-sign cases, max of the negative one
  double worst_xi = 0.0;
  double worst_hurst = 0.0;
  bool margin_ok = false;
  // whether the relevant xi values avoid the variance-critical band over the H box
  bool xi_outside_critical_band = false;
  double critical_band_lo = 0.0;
  double critical_band_hi = 0.0;
};

namespace detail {

inline double grid_value(const GridSpec& g, int i) {
  if (g.points < 2) return g.lo;
  return g.lo + (g.hi - g.lo) * static_cast<double>(i) / static_cast<double>(g.points - 1);
}

}  // namespace detail

inline MarginReport identifiability_margin(IdentCase which, const MarginInputs& in,
                                           const quad::QuadratureSpec& spec = {}) {
  if (in.xi_grid.points < 1 || in.hurst_grid.points < 1)
    throw std::invalid_argument("identifiability_margin: grids need at least one point");
  MarginReport rep;
  rep.which = which;

  double band_lo = std::numeric_limits<double>::infinity();
  double band_hi = -band_lo;
  for (int i = 0; i < in.hurst_grid.points; ++i) {
    const double t = variance_critical_xi(detail::grid_value(in.hurst_grid, i));
    band_lo = std::min(band_lo, t);
    band_hi = std::max(band_hi, t);
  }
  rep.critical_band_lo = band_lo;
  rep.critical_band_hi = band_hi;

  switch (which) {
    case IdentCase::sigma_hurst: {
      double worst = std::numeric_limits<double>::infinity();
      for (int i = 0; i < in.hurst_grid.points; ++i) {
        const double hurst = detail::grid_value(in.hurst_grid, i);
        const double s = sigma_hurst_slope(in.xi_fixed, hurst, in.lag_h, spec);
        if (s < worst) {
          worst = s;
          rep.worst_xi = in.xi_fixed;
          rep.worst_hurst = hurst;
        }
      }
      rep.worst_slope = worst;
      rep.margin_ok = worst > 0.0;
      rep.xi_outside_critical_band = in.xi_fixed > band_hi || in.xi_fixed < band_lo;
      break;
    }
    case IdentCase::xi_hurst: {
      double worst = std::numeric_limits<double>::infinity();
      for (int i = 0; i < in.xi_grid.points; ++i) {
        for (int j = 0; j < in.hurst_grid.points; ++j) {
          const double xi = detail::grid_value(in.xi_grid, i);
          const double hurst = detail::grid_value(in.hurst_grid, j);
          const double a = hurst * std::tgamma(2.0 * hurst) * std::pow(xi, -2.0 * hurst);
          const double s = xi_hurst_slope(a, hurst, in.lag_h, spec);
          if (s < worst) {
            worst = s;
            rep.worst_xi = xi;
            rep.worst_hurst = hurst;
          }
        }
      }
      rep.worst_slope = worst;
      rep.margin_ok = worst > 0.0;
      rep.xi_outside_critical_band = in.xi_grid.lo > band_hi || in.xi_grid.hi < band_lo;
      break;
    }
    case IdentCase::xi_sigma: {
      double worst = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < in.xi_grid.points; ++i) {
        const double xi = detail::grid_value(in.xi_grid, i);
        const double s = xi_sigma_slope(xi, in.hurst_fixed, in.lag_h, spec);
        if (s > worst) {
          worst = s;
          rep.worst_xi = xi;
          rep.worst_hurst = in.hurst_fixed;
        }
      }
      rep.worst_slope = worst;
      rep.margin_ok = worst < 0.0;
      rep.xi_outside_critical_band = true;  // H is known in this case
      break;
    }
  }
  return rep;
}

}  // namespace fracsde
