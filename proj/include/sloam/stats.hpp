#pragma once

#include <algorithm>
#include <vector>

namespace sloam {

// Median of a copy of the values (even count: mean of the middle two).
inline double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace sloam
