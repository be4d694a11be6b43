#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "common/errors.hpp"

namespace ehrgen {

// Linear-interpolation quantile of unsorted data.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ValidationError("quantile of empty data");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace ehrgen
