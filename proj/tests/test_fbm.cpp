#include "fracsde/fbm.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <complex>
#include <vector>

#include "fracsde/fft.hpp"
#include "test_support.hpp"

using namespace fracsde;

TEST_CASE("fbm covariance closed forms") {
  // H = 1/2 is standard Brownian motion: cov(s,t) = min(s,t)
  CHECK(fbm_covariance(1.0, 2.0, 0.5) == Catch::Approx(1.0).margin(1e-14));
  CHECK(fbm_covariance(0.3, 0.2, 0.5) == Catch::Approx(0.2).margin(1e-14));
  // frozen value of (1 + 2^{1.4} - 1)/2
  CHECK(fbm_covariance(1.0, 2.0, 0.7) == Catch::Approx(1.3195079107728943).epsilon(1e-12));
  // marginal variance t^{2H}
  CHECK(fbm_covariance(1.7, 1.7, 0.3) == Catch::Approx(std::pow(1.7, 0.6)).epsilon(1e-13));
  // symmetry and zero boundary
  CHECK(fbm_covariance(0.4, 1.1, 0.8) == Catch::Approx(fbm_covariance(1.1, 0.4, 0.8)).epsilon(1e-14));
  CHECK(fbm_covariance(0.0, 1.0, 0.6) == Catch::Approx(0.0).margin(1e-14));

  CHECK_THROWS_AS(fbm_covariance(1.0, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(fbm_covariance(1.0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(fbm_covariance(-1.0, 1.0, 0.5), std::invalid_argument);
}

TEST_CASE("fgn autocovariance basics") {
  CHECK(fgn_autocovariance(0, 0.7, 1.0) == Catch::Approx(1.0).epsilon(1e-14));
  CHECK(fgn_autocovariance(0, 0.7, 0.01) == Catch::Approx(std::pow(0.01, 1.4)).epsilon(1e-13));
  CHECK(fgn_autocovariance(5, 0.62, 1.0) == Catch::Approx(fgn_autocovariance(-5, 0.62, 1.0)).epsilon(1e-14));
  // H = 1/2: increments are independent
  for (int lag = 1; lag <= 6; ++lag) CHECK(fgn_autocovariance(lag, 0.5, 1.0) == Catch::Approx(0.0).margin(1e-14));
  // consistency with the fBm covariance: gamma(k) = cov of increments
  const double h = 0.7;
  const double expected = fbm_covariance(1.0, 4.0, h) - fbm_covariance(1.0, 3.0, h) -
                          fbm_covariance(0.0, 4.0, h) + fbm_covariance(0.0, 3.0, h);
  CHECK(fgn_autocovariance(3, h, 1.0) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("circulant embedding reconstructs the autocovariance exactly") {
  for (double hurst : {0.3, 0.55, 0.7, 0.9}) {
    const std::size_t n_padded = 64;
    std::vector<double> lambda = detail::fgn_embedding_eigenvalues(n_padded, hurst, 1.0);
    REQUIRE(lambda.size() == 2 * n_padded);

    // eigenvalues of the fGn embedding are nonnegative (tiny FFT roundoff aside)
    const double max_lambda = *std::max_element(lambda.begin(), lambda.end());
    for (double v : lambda) CHECK(v >= -1e-12 * max_lambda);

    // inverse transform must give back the covariance row
    std::vector<std::complex<double>> back(lambda.begin(), lambda.end());
    detail::fft_pow2(back, +1);
    for (std::size_t j = 0; j <= n_padded; ++j) {
      const double recovered = back[j].real() / static_cast<double>(2 * n_padded);
      CHECK(recovered == Catch::Approx(fgn_autocovariance(static_cast<std::int64_t>(j), hurst, 1.0)).margin(1e-12));
    }
  }
}

TEST_CASE("davies-harte determinism and stream separation") {
  const RngStream stream{42, 7};
  FbmGrid a = sample_fbm(0.7, 0.5, 300, stream);
  FbmGrid b = sample_fbm(0.7, 0.5, 300, stream);
  REQUIRE(a.values.size() == 301);
  CHECK(a.values == b.values);  // bit-identical replay
  CHECK(a.values[0] == 0.0);

  FbmGrid c = sample_fbm(0.7, 0.5, 300, RngStream{42, 8});
  FbmGrid d = sample_fbm(0.7, 0.5, 300, RngStream{43, 7});
  CHECK(a.values != c.values);
  CHECK(a.values != d.values);

  // truncation exactness: n and its padded size share one underlying sample
  FbmGrid full = sample_fbm(0.7, 0.5, 512, stream);
  for (std::size_t k = 0; k < 301; ++k) CHECK(a.values[k] == full.values[k]);
}

TEST_CASE("self-similarity holds pathwise for a shared stream") {
  const RngStream stream{11, 0};
  const double hurst = 0.65;
  FbmGrid unit = sample_fbm(hurst, 1.0, 256, stream);
  FbmGrid fine = sample_fbm(hurst, 0.01, 256, stream);
  const double scale = std::pow(0.01, hurst);
  for (std::size_t k = 0; k < unit.values.size(); ++k)
    CHECK(fine.values[k] == Catch::Approx(scale * unit.values[k]).margin(1e-12 * scale + 1e-300));
}

TEST_CASE("davies-harte increments match the analytic law") {
  // per-path time averages of delta_k delta_{k+lag} are unbiased for gamma(lag);
  // average over independent paths and compare at 4 standard errors
  const int paths = 4000;
  const int n = 256;
  for (double hurst : {0.3, 0.7}) {
    std::vector<std::vector<double>> lag_stats(8, std::vector<double>(paths));
    for (int p = 0; p < paths; ++p) {
      FbmGrid g = sample_fbm(hurst, 1.0, n, RngStream{2024, static_cast<std::uint64_t>(p)});
      std::vector<double> inc(n);
      for (int k = 0; k < n; ++k) inc[k] = g.values[k + 1] - g.values[k];
      for (int lag = 0; lag < 8; ++lag) {
        double s = 0.0;
        for (int k = 0; k + lag < n; ++k) s += inc[k] * inc[k + lag];
        lag_stats[lag][p] = s / static_cast<double>(n - lag);
      }
    }
    for (int lag = 0; lag < 8; ++lag) {
      const double est = testsupport::mean(lag_stats[lag]);
      const double se = testsupport::std_error_of_mean(lag_stats[lag]);
      const double target = fgn_autocovariance(lag, hurst, 1.0);
      INFO("hurst=" << hurst << " lag=" << lag << " est=" << est << " target=" << target << " se=" << se);
      CHECK(std::abs(est - target) <= 4.0 * se);
    }
  }
}

TEST_CASE("spec scale run: length 4096 at H=0.7") {
  const int paths = 10000;
  const int n = 4096;
  const double hurst = 0.7;
  std::vector<std::vector<double>> lag_stats(8, std::vector<double>(paths));
  for (int p = 0; p < paths; ++p) {
    FbmGrid g = sample_fbm(hurst, 1.0, n, RngStream{77, static_cast<std::uint64_t>(p)});
    std::vector<double> inc(n);
    for (int k = 0; k < n; ++k) inc[k] = g.values[k + 1] - g.values[k];
    for (int lag = 0; lag < 8; ++lag) {
      double s = 0.0;
      for (int k = 0; k + lag < n; ++k) s += inc[k] * inc[k + lag];
      lag_stats[lag][p] = s / static_cast<double>(n - lag);
    }
  }
  for (int lag = 0; lag < 8; ++lag) {
    const double est = testsupport::mean(lag_stats[lag]);
    const double se = testsupport::std_error_of_mean(lag_stats[lag]);
    const double target = fgn_autocovariance(lag, hurst, 1.0);
    INFO("lag=" << lag << " est=" << est << " target=" << target << " se=" << se);
    CHECK(std::abs(est - target) <= 4.0 * se);
  }
}

TEST_CASE("cholesky reference sampler matches the analytic law") {
  const int paths = 3000;
  const int n = 64;
  const double hurst = 0.7;
  std::vector<std::vector<double>> lag_stats(4, std::vector<double>(paths));
  for (int p = 0; p < paths; ++p) {
    FbmGrid g = sample_fbm_cholesky(hurst, 1.0, n, RngStream{5, static_cast<std::uint64_t>(p)});
    std::vector<double> inc(n);
    for (int k = 0; k < n; ++k) inc[k] = g.values[k + 1] - g.values[k];
    for (int lag = 0; lag < 4; ++lag) {
      double s = 0.0;
      for (int k = 0; k + lag < n; ++k) s += inc[k] * inc[k + lag];
      lag_stats[lag][p] = s / static_cast<double>(n - lag);
    }
  }
  for (int lag = 0; lag < 4; ++lag) {
    const double est = testsupport::mean(lag_stats[lag]);
    const double se = testsupport::std_error_of_mean(lag_stats[lag]);
    const double target = fgn_autocovariance(lag, hurst, 1.0);
    INFO("lag=" << lag << " est=" << est << " target=" << target << " se=" << se);
    CHECK(std::abs(est - target) <= 4.0 * se);
  }
  // replay determinism holds for the reference sampler too
  FbmGrid a = sample_fbm_cholesky(0.6, 1.0, 32, RngStream{1, 2});
  FbmGrid b = sample_fbm_cholesky(0.6, 1.0, 32, RngStream{1, 2});
  CHECK(a.values == b.values);
}

TEST_CASE("H=1/2 increments are white") {
  const int paths = 50;
  const int n = 1000;
  std::vector<double> corr(paths);
  for (int p = 0; p < paths; ++p) {
    FbmGrid g = sample_fbm(0.5, 1.0, n, RngStream{99, static_cast<std::uint64_t>(p)});
    std::vector<double> inc(n);
    for (int k = 0; k < n; ++k) inc[k] = g.values[k + 1] - g.values[k];
    double num = 0.0;
    double den = 0.0;
    for (int k = 0; k + 1 < n; ++k) num += inc[k] * inc[k + 1];
    for (int k = 0; k < n; ++k) den += inc[k] * inc[k];
    corr[p] = num / den;
  }
  CHECK(std::abs(testsupport::mean(corr)) <= 4.0 / std::sqrt(static_cast<double>(paths) * n));
}

TEST_CASE("sampler input validation") {
  CHECK_THROWS_AS(sample_fbm(0.0, 1.0, 10, RngStream{}), std::invalid_argument);
  CHECK_THROWS_AS(sample_fbm(1.0, 1.0, 10, RngStream{}), std::invalid_argument);
  CHECK_THROWS_AS(sample_fbm(0.5, 0.0, 10, RngStream{}), std::invalid_argument);
  CHECK_THROWS_AS(sample_fbm(0.5, 1.0, 0, RngStream{}), std::invalid_argument);
  CHECK_THROWS_AS(sample_fbm_cholesky(0.5, 1.0, 4096, RngStream{}), std::invalid_argument);
}
