#pragma once

#include "ibnn/numerics.hpp"

namespace ibnn {

/// Closed-form Gaussian predictive over a scalar output.
struct GaussianPredictive {
  double mean = 0.0;
  double variance = 1.0;
};

/// Equal-weight mixture (1/M) Σ_m N(y; means_m, noise_var).
struct MixturePredictive {
  Vector means;
  double noise_var = 1.0;
};

}  // namespace ibnn
