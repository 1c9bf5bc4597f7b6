#include "fracsde/quadrature.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

using namespace fracsde;

namespace {

// head + tail composition for ∫_0^∞ trig(omega x) g(x) dx with g bounded at 0
template <class G>
double full_oscillatory(G g, double omega, quad::Trig trig, const quad::QuadratureSpec& spec) {
  auto f = [&](double x) { return (trig == quad::Trig::cosine ? std::cos(omega * x) : std::sin(omega * x)) * g(x); };
  const double head = quad::detail::gk_segment(f, 0.0, spec.split_point, 1e-13);
  return head + quad::oscillatory_tail(g, omega, trig, spec.split_point, spec);
}

}  // namespace

TEST_CASE("euler transformation sums slowly alternating series") {
  // sum (-1)^k/(k+1) = log 2
  const double log2_sum = quad::euler_alternating_sum(
      [](int k) { return (k % 2 == 0 ? 1.0 : -1.0) / (k + 1.0); }, 1e-12, 200);
  CHECK(log2_sum == Catch::Approx(std::log(2.0)).epsilon(1e-11));

  // sum (-1)^k/sqrt(k+1) = eta(1/2), barely convergent without acceleration
  const double eta_half = quad::euler_alternating_sum(
      [](int k) { return (k % 2 == 0 ? 1.0 : -1.0) / std::sqrt(k + 1.0); }, 1e-12, 200);
  CHECK(eta_half == Catch::Approx(0.6048986434216304).epsilon(1e-10));

  // non-converging input is reported instead of silently truncated
  CHECK_THROWS_AS(quad::euler_alternating_sum([](int) { return 1.0; }, 1e-12, 50), std::runtime_error);
}

TEST_CASE("algebraic tails") {
  const quad::QuadratureSpec spec;
  CHECK(quad::algebraic_tail([](double x) { return 1.0 / (x * x); }, 1.0, spec) == Catch::Approx(1.0).epsilon(1e-10));
  // ∫_1^∞ log x / x^3 dx = 1/4
  CHECK(quad::algebraic_tail([](double x) { return std::log(x) / (x * x * x); }, 1.0, spec) ==
        Catch::Approx(0.25).epsilon(1e-10));
  // ∫_2^∞ x^{-1.6} dx = 2^{-0.6}/0.6
  CHECK(quad::algebraic_tail([](double x) { return std::pow(x, -1.6); }, 2.0, spec) ==
        Catch::Approx(std::pow(2.0, -0.6) / 0.6).epsilon(1e-9));
  CHECK_THROWS_AS(quad::algebraic_tail([](double x) { return x; }, 0.0, spec), std::invalid_argument);
}

TEST_CASE("oscillatory integrals against closed forms") {
  const quad::QuadratureSpec spec;
  auto cauchy = [](double x) { return 1.0 / (1.0 + x * x); };
  // ∫_0^∞ cos(omega x)/(1+x^2) dx = (pi/2) e^{-omega}
  const double half_pi = 1.5707963267948966;
  CHECK(full_oscillatory(cauchy, 0.1, quad::Trig::cosine, spec) == Catch::Approx(1.4213152925974636).epsilon(1e-10));
  CHECK(full_oscillatory(cauchy, 1.0, quad::Trig::cosine, spec) == Catch::Approx(0.5778636748954609).epsilon(2e-9));
  CHECK(full_oscillatory(cauchy, 5.0, quad::Trig::cosine, spec) == Catch::Approx(0.010583942396302148).epsilon(1e-9));
  // severe cancellation: the answer is ~5e-7 built from half-period pieces of
  // ~1e-1, so accuracy is absolute (relative to the piece scale), not relative
  CHECK(full_oscillatory(cauchy, 15.0, quad::Trig::cosine, spec) ==
        Catch::Approx(4.805102414023031e-07).margin(5e-11));
  // ∫_0^∞ x sin(omega x)/(1+x^2) dx = (pi/2) e^{-omega}
  auto xc = [](double x) { return x / (1.0 + x * x); };
  CHECK(full_oscillatory(xc, 1.0, quad::Trig::sine, spec) == Catch::Approx(0.5778636748954609).epsilon(1e-9));
  CHECK(full_oscillatory(xc, 0.0, quad::Trig::sine, spec) == Catch::Approx(0.0).margin(1e-14));
  // omega = 0 falls back to the plain tail: ∫_0^∞ 1/(1+x^2) = pi/2
  CHECK(full_oscillatory(cauchy, 0.0, quad::Trig::cosine, spec) == Catch::Approx(half_pi).epsilon(1e-10));

  CHECK_THROWS_AS(quad::oscillatory_tail(cauchy, -1.0, quad::Trig::cosine, 1.0, spec), std::invalid_argument);
}
