#pragma once

// Minimal power-of-two complex FFT used by the circulant-embedding sampler.
// Unscaled: applying sign=-1 then sign=+1 multiplies the input by n.

#include <complex>
#include <stdexcept>
#include <vector>

namespace fracsde::detail {

inline void fft_pow2(std::vector<std::complex<double>>& a, int sign) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::invalid_argument("fft_pow2: size must be a nonzero power of two");

  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  const double pi = 3.14159265358979323846264338327950288;
  std::vector<std::complex<double>> twiddle(n / 2);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    // tabulated per stage so roundoff does not accumulate multiplicatively
    for (std::size_t j = 0; j < half; ++j)
      twiddle[j] = std::polar(1.0, sign * 2.0 * pi * static_cast<double>(j) / static_cast<double>(len));
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const std::complex<double> even = a[start + j];
        const std::complex<double> odd = a[start + j + half] * twiddle[j];
        a[start + j] = even + odd;
        a[start + j + half] = even - odd;
      }
    }
  }
}

}  // namespace fracsde::detail
