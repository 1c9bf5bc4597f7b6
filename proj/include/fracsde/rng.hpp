#pragma once

// Reproducible random streams. Every stochastic routine in this library takes
// an RngStream value instead of a shared generator, so results are a pure
// function of (seed, stream_id) and independent of thread scheduling.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace fracsde {

struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// xoshiro256++ seeded from (seed, stream_id) through splitmix64. Self-contained
// so that draws are bit-stable across standard libraries; normal and gamma
// variates are generated here for the same reason.
class Rng {
 public:
  explicit Rng(RngStream s) {
    std::uint64_t a = s.seed;
    std::uint64_t b = s.stream_id ^ 0x6a09e667f3bcc908ull;  // decouple the two inputs
    std::uint64_t mixed = detail::splitmix64(a) ^ detail::rotl64(detail::splitmix64(b), 31);
    for (auto& word : state_) word = detail::splitmix64(mixed);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  // uniform in (0,1); never returns 0 so log() is safe
  double uniform01() {
    double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return u > 0.0 ? u : 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller with a cached spare
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Gamma(shape, 1) by Marsaglia-Tsang, with the usual boost for shape < 1
  double gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("Rng::gamma: shape must be positive");
    if (shape < 1.0) {
      const double u = uniform01();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform01();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
  }

  // uniform direction on the unit sphere in R^dim
  std::vector<double> sphere(int dim) {
    if (dim < 1) throw std::invalid_argument("Rng::sphere: dim must be >= 1");
    std::vector<double> u(dim);
    double norm_sq = 0.0;
    do {
      norm_sq = 0.0;
      for (auto& c : u) {
        c = normal();
        norm_sq += c * c;
      }
    } while (norm_sq == 0.0);
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& c : u) c *= inv;
    return u;
  }

 private:
  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fracsde
