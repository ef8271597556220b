#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace rlvr {

// Group-relative advantages: (r_i - mean) / population std. A group whose
// rewards barely vary (std below the floor) yields all-zero advantages and
// therefore no gradient, rather than a noisy direction from ~0/~0.
inline std::vector<double> group_advantages(std::span<const double> rewards,
                                            double std_floor = 1e-8) {
  if (rewards.size() < 2) throw std::invalid_argument("group_advantages: need at least 2 rewards");
  if (!(std_floor > 0.0)) throw std::invalid_argument("group_advantages: std_floor must be > 0");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  const double sd = std::sqrt(var);
  std::vector<double> out(rewards.size(), 0.0);
  if (sd < std_floor) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

}  // namespace rlvr
