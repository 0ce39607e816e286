#pragma once

#include <cmath>
#include <string>

#include "s3e/error.hpp"

namespace s3e {

struct WeightConfig {
  double epsilon = 1e-3;

  void validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
      throw ValidationError("epsilon must be a positive finite number, got " + std::to_string(epsilon));
    }
  }
};

// Smooth inverse-frequency weight eps / (eps + p). Frequent words get small
// weights; p = 0 maps to exactly 1.
inline double weight(double p, const WeightConfig& cfg) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ValidationError("probability out of [0, 1]: " + std::to_string(p));
  }
  return cfg.epsilon / (cfg.epsilon + p);
}

}  // namespace s3e
