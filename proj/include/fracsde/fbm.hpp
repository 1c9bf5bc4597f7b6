#pragma once

// Exact sampling of fractional Brownian motion on a uniform grid.
//
// The default sampler embeds the fractional-Gaussian-noise covariance in a
// circulant matrix and diagonalizes it with an FFT (Davies-Harte), which is
// exact in law and O(n log n). A dense Cholesky sampler is provided as a
// slow reference for moderate n.

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fracsde/common.hpp"
#include "fracsde/fft.hpp"
#include "fracsde/rng.hpp"

namespace fracsde {

// E[B_s B_t] = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2
inline double fbm_covariance(double s, double t, double hurst) {
  detail::check_hurst(hurst, "fbm_covariance");
  if (s < 0.0 || t < 0.0) throw std::invalid_argument("fbm_covariance: times must be >= 0");
  const double two_h = 2.0 * hurst;
  return 0.5 * (std::pow(s, two_h) + std::pow(t, two_h) - std::pow(std::abs(t - s), two_h));
}

// Autocovariance of grid increments B_{(k+1)step} - B_{k step} at the given lag.
inline double fgn_autocovariance(std::int64_t lag, double hurst, double step) {
  detail::check_hurst(hurst, "fgn_autocovariance");
  if (!(step > 0.0)) throw std::invalid_argument("fgn_autocovariance: step must be positive");
  const double two_h = 2.0 * hurst;
  const double k = static_cast<double>(lag < 0 ? -lag : lag);
  const double unit = 0.5 * (std::pow(k + 1.0, two_h) + std::pow(std::abs(k - 1.0), two_h) - 2.0 * std::pow(k, two_h));
  return std::pow(step, two_h) * unit;
}

struct FbmGrid {
  double hurst = 0.5;
  double step = 1.0;
  std::vector<double> values;      // values[k] = B_{k*step}; values[0] == 0
  std::vector<double> increments;  // increments[k] = the raw draw summed into values[k+1]
};

namespace detail {

// Eigenvalues of the circulant embedding of the fGn covariance for n_padded
// increments (n_padded a power of two). Exposed for tests: the inverse DFT of
// these eigenvalues must reproduce the autocovariance exactly.
inline std::vector<double> fgn_embedding_eigenvalues(std::size_t n_padded, double hurst, double step) {
  const std::size_t m = 2 * n_padded;
  std::vector<std::complex<double>> c(m);
  for (std::size_t j = 0; j <= n_padded; ++j) c[j] = fgn_autocovariance(static_cast<std::int64_t>(j), hurst, step);
  for (std::size_t j = n_padded + 1; j < m; ++j) c[j] = c[m - j];
  fft_pow2(c, -1);
  std::vector<double> lambda(m);
  for (std::size_t k = 0; k < m; ++k) lambda[k] = c[k].real();
  return lambda;
}

}  // namespace detail

// Davies-Harte sampler. Returns values at 0, step, ..., n*step (n increments).
// The increment count is padded internally to a power of two; the first n
// increments of the longer stationary sample have the exact target law.
inline FbmGrid sample_fbm(double hurst, double step, int n, RngStream stream) {
  detail::check_hurst(hurst, "sample_fbm");
  if (!(step > 0.0)) throw std::invalid_argument("sample_fbm: step must be positive");
  if (n < 1) throw std::invalid_argument("sample_fbm: n must be >= 1");

  const std::size_t n_padded = std::bit_ceil(static_cast<std::size_t>(n));
  const std::size_t m = 2 * n_padded;
  std::vector<double> lambda = detail::fgn_embedding_eigenvalues(n_padded, hurst, step);

  const double lambda_max = *std::max_element(lambda.begin(), lambda.end());
  const double tolerance = 1e-10 * lambda_max;
  for (auto& v : lambda) {
    if (v < -tolerance)
      throw std::runtime_error("sample_fbm: circulant embedding not positive semidefinite (eigenvalue " +
                               std::to_string(v) + ")");
    if (v < 0.0) v = 0.0;  // tiny negatives are FFT roundoff
  }

  // Hermitian-symmetric Gaussian spectrum -> real stationary sample
  Rng rng(stream);
  std::vector<std::complex<double>> w(m);
  const double inv_m = 1.0 / static_cast<double>(m);
  w[0] = std::sqrt(lambda[0] * inv_m) * rng.normal();
  for (std::size_t k = 1; k < n_padded; ++k) {
    const double scale = std::sqrt(0.5 * lambda[k] * inv_m);
    const double re = rng.normal();
    const double im = rng.normal();
    w[k] = std::complex<double>(scale * re, scale * im);
    w[m - k] = std::conj(w[k]);
  }
  w[n_padded] = std::sqrt(lambda[n_padded] * inv_m) * rng.normal();

  detail::fft_pow2(w, -1);

  FbmGrid out;
  out.hurst = hurst;
  out.step = step;
  out.values.resize(static_cast<std::size_t>(n) + 1);
  out.increments.resize(static_cast<std::size_t>(n));
  out.values[0] = 0.0;
  for (int k = 0; k < n; ++k) {
    out.increments[static_cast<std::size_t>(k)] = w[static_cast<std::size_t>(k)].real();
    out.values[static_cast<std::size_t>(k) + 1] = out.values[static_cast<std::size_t>(k)] + out.increments[static_cast<std::size_t>(k)];
  }
  return out;
}

// Dense Cholesky reference sampler; O(n^3), capped to keep runtimes sane.
inline FbmGrid sample_fbm_cholesky(double hurst, double step, int n, RngStream stream) {
  detail::check_hurst(hurst, "sample_fbm_cholesky");
  if (!(step > 0.0)) throw std::invalid_argument("sample_fbm_cholesky: step must be positive");
  if (n < 1) throw std::invalid_argument("sample_fbm_cholesky: n must be >= 1");
  if (n > 2048) throw std::invalid_argument("sample_fbm_cholesky: n capped at 2048, use sample_fbm");

  Eigen::MatrixXd cov(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      const double v = fgn_autocovariance(i - j, hurst, step);
      cov(i, j) = v;
      cov(j, i) = v;
    }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("sample_fbm_cholesky: increment covariance is not positive definite");

  Rng rng(stream);
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z(i) = rng.normal();
  Eigen::VectorXd increments = llt.matrixL() * z;

  FbmGrid out;
  out.hurst = hurst;
  out.step = step;
  out.values.resize(static_cast<std::size_t>(n) + 1);
  out.increments.resize(static_cast<std::size_t>(n));
  out.values[0] = 0.0;
  for (int k = 0; k < n; ++k) {
    out.increments[static_cast<std::size_t>(k)] = increments(k);
    out.values[static_cast<std::size_t>(k) + 1] = out.values[static_cast<std::size_t>(k)] + increments(k);
  }
  return out;
}

}  // namespace fracsde
