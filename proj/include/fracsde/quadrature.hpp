#pragma once

// Quadrature for the spectral-density integrals behind the stationary law.
// The integrands look like trig(omega*x) * x^a * log(x)^{0,1} / (1+x^2) on
// (0, inf): an integrable power/log singularity at zero and a conditionally
// convergent oscillating tail. The head is integrated after a substitution
// that removes the singularity, the tail half-period by half-period between
// consecutive trig zeros, and the resulting alternating series is accelerated
// with an Euler (repeated-averaging) transformation.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace fracsde::quad {

struct QuadratureSpec {
  double split_point = 1.0;  // head/tail boundary
  double rel_tol = 1e-8;     // target relative accuracy of the full integral
  int max_half_periods = 4000;
};

namespace detail {

// adaptive Gauss-Kronrod 7-15 for bounded smooth-ish integrands
template <class F>
double gk_segment(F&& f, double a, double b, double rel_tol) {
  return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 14, rel_tol);
}

// double-exponential rule; tolerates integrable endpoint singularities
template <class F>
double de_segment(F&& f, double a, double b, double rel_tol) {
  static thread_local boost::math::quadrature::tanh_sinh<double> rule;
  return rule.integrate(f, a, b, rel_tol);
}

}  // namespace detail

// Sum of t(0) + t(1) + ... for terms of eventually alternating sign, using the
// Euler transformation on the partial sums. Stops once two successive
// transformed estimates agree to rel_tol (with a small absolute floor).
template <class TermFn>
double euler_alternating_sum(TermFn term, double rel_tol, int max_terms, double abs_floor = 0.0) {
  if (max_terms < 1) throw std::invalid_argument("euler_alternating_sum: max_terms must be >= 1");
  std::vector<double> diag;  // anti-diagonal of the averaging tableau
  diag.reserve(64);
  double partial = 0.0;
  double previous_estimate = 0.0;
  for (int k = 0; k < max_terms; ++k) {
    partial += term(k);
    double carry = partial;  // becomes the new order-0 entry
    for (double& cell : diag) {
      const double averaged = 0.5 * (cell + carry);
      cell = carry;
      carry = averaged;
    }
    diag.push_back(carry);
    const double estimate = diag.back();
    if (k >= 3) {
      const double change = std::abs(estimate - previous_estimate);
      if (change <= rel_tol * std::abs(estimate) + abs_floor) return estimate;
    }
    previous_estimate = estimate;
  }
  throw std::runtime_error("euler_alternating_sum: no convergence within max_terms");
}

enum class Trig { cosine, sine };

// ∫_from^∞ g(x) dx for g with algebraic decay x^{-(1+p)}, p > 0 (log factors
// allowed). Maps to (0,1] via x = from/v; the endpoint singularity at v=0 is
// integrable and handled by the double-exponential rule.
template <class G>
double algebraic_tail(G g, double from, const QuadratureSpec& spec) {
  if (!(from > 0.0)) throw std::invalid_argument("algebraic_tail: from must be positive");
  auto mapped = [&](double v) {
    // the double-exponential rule probes v down to denormal range; beyond
    // x ~ from*1e60 every admissible envelope contributes < 1e-12 relative,
    // and cutting there keeps g's internal powers finite
    if (v <= 1e-60) return 0.0;
    const double x = from / v;
    return g(x) * from / (v * v);
  };
  return detail::de_segment(mapped, 0.0, 1.0, 0.1 * spec.rel_tol);
}

// ∫_from^∞ trig(omega x) g(x) dx for a smooth positive decaying envelope g.
// Splits at the trig zeros; the half-period integrals alternate in sign and
// are fed to the Euler transformation.
template <class G>
double oscillatory_tail(G g, double omega, Trig trig, double from, const QuadratureSpec& spec) {
  if (!(from > 0.0)) throw std::invalid_argument("oscillatory_tail: from must be positive");
  if (omega == 0.0) {
    if (trig == Trig::sine) return 0.0;
    return algebraic_tail(g, from, spec);
  }
  if (!(omega > 0.0)) throw std::invalid_argument("oscillatory_tail: omega must be >= 0");

  auto f = [&](double x) { return (trig == Trig::cosine ? std::cos(omega * x) : std::sin(omega * x)) * g(x); };
  auto zero_at = [&](std::int64_t k) {
    const double offset = trig == Trig::cosine ? 0.5 : 1.0;
    return (static_cast<double>(k) + offset) * 3.14159265358979323846 / omega;
  };

  // index of the first zero strictly beyond `from`
  std::int64_t k0 = 0;
  while (zero_at(k0) <= from) ++k0;

  const double seg_tol = 1e-13;
  double head = detail::gk_segment(f, from, zero_at(k0), seg_tol);
  // the partial sums may cancel down to ~1e-15 of this scale but no further,
  // so the series is pushed to an absolute floor keyed to it
  const double scale = std::abs(head) + std::abs(g(from));
  const double series = euler_alternating_sum(
      [&](int j) {
        const std::int64_t k = k0 + j;
        return detail::gk_segment(f, zero_at(k), zero_at(k + 1), seg_tol);
      },
      0.02 * spec.rel_tol, spec.max_half_periods, 1e-15 * scale);
  return head + series;
}

}  // namespace fracsde::quad
