#pragma once

#include <functional>
#include <vector>

#include "ibnn/model.hpp"
#include "ibnn/predictive.hpp"
#include "ibnn/vi.hpp"

namespace ibnn {

struct MapResult {
  Vector theta;
  LikelihoodSpec lik;
  double initial_log_joint = 0.0;
  double final_log_joint = 0.0;
  std::size_t steps = 0;
};

using MapObserver =
    std::function<void(std::size_t step, const Vector& theta, const LikelihoodSpec& lik)>;

/// Initial point for MAP training: the mean-field mean initialisation.
Vector init_map_params(const Architecture& arch, Rng& rng);

/// Adam ascent on log_joint (minibatch likelihood rescaled by N/|batch|).
/// σ_o is learned jointly when `lik.trainable`.
MapResult train_map(const Architecture& arch, const Dataset& data, const PriorSpec& prior,
                    const LikelihoodSpec& lik, const TrainConfig& config,
                    const MapObserver& observer = {});
MapResult train_map_from(const Architecture& arch, const Dataset& data, const PriorSpec& prior,
                         const LikelihoodSpec& lik, const TrainConfig& config, Vector theta0,
                         const MapObserver& observer = {});

/// Gaussian N(θ_MAP, A⁻¹) with A = (1/σ_o²) Σ_n g_n g_nᵀ + diag(1/prior variance).
struct LaplacePosterior {
  Vector theta_map;
  Matrix precision;
  CholeskyFactor precision_chol;
  double noise_var = 1.0;
};

/// Assembles the Gauss-Newton precision with one gradient pass per datapoint
/// and factors it. Single-output networks only.
LaplacePosterior gauss_newton_precision(const Architecture& arch, const Vector& theta_map,
                                        const Dataset& data, const PriorSpec& prior,
                                        double noise_var, const JitterPolicy& jitter = {});

/// Builds a posterior from an explicit precision matrix.
LaplacePosterior laplace_from_precision(Vector theta_map, Matrix precision, double noise_var,
                                        const JitterPolicy& jitter = {});

/// θ_MAP + L⁻ᵀ z with z standard normal, so that Cov[θ] = A⁻¹.
Vector laplace_sample(const LaplacePosterior& post, Rng& rng);
Vector laplace_sample_with_noise(const LaplacePosterior& post, const Vector& z);

/// N(f_MAP(x), σ_o² + vᵀv) with v = L⁻¹ g(x).
GaussianPredictive linearised_predictive(const LaplacePosterior& post, const Architecture& arch,
                                         const Vector& x);
/// Row-wise linearised predictive for every row of `x`.
std::vector<GaussianPredictive> linearised_predictive_batch(const LaplacePosterior& post,
                                                            const Architecture& arch,
                                                            const Matrix& x);

}  // namespace ibnn
