#pragma once

#include <stdexcept>
#include <string>

namespace fracsde::detail {

inline void check_hurst(double hurst, const char* where) {
  if (!(hurst > 0.0) || !(hurst < 1.0))
    throw std::invalid_argument(std::string(where) + ": hurst must lie in (0,1), got " + std::to_string(hurst));
}

}  // namespace fracsde::detail
