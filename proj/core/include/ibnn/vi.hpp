#pragma once

#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

#include "ibnn/model.hpp"

namespace ibnn {

/// Fully factorised Gaussian q(θ) = Π N(μ_i, exp(log_var_i)).
struct MeanFieldPosterior {
  Vector mean;
  Vector log_var;

  Vector variance() const { return log_var.array().exp().matrix(); }
};

/// Full-covariance Gaussian q(θ) = N(μ, L·Lᵀ). `scale_param` is lower
/// triangular and stores log L_ii on its diagonal.
struct FullCovPosterior {
  Vector mean;
  Matrix scale_param;

  Matrix scale() const;
  Matrix covariance() const;
  /// Builds the parameterisation from a lower-triangular L with positive diagonal.
  static FullCovPosterior from_scale(Vector mean, const Matrix& lower);
};

using VariationalPosterior = std::variant<MeanFieldPosterior, FullCovPosterior>;

/// Adam minimiser with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
class Adam {
 public:
  Adam(Eigen::Index size, double learning_rate);

  /// params -= lr · m̂ / (√v̂ + ε)
  void step(Vector& params, const Vector& grad);

  std::size_t step_count() const { return step_count_; }
  double learning_rate() const { return learning_rate_; }
  const Vector& first_moment() const { return first_moment_; }
  const Vector& second_moment() const { return second_moment_; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

 private:
  double learning_rate_;
  std::size_t step_count_ = 0;
  Vector first_moment_;
  Vector second_moment_;
};

struct TrainConfig {
  int epochs = 100;
  /// 0 selects full-batch training.
  int batch_size = 0;
  double learning_rate = 1e-3;
  int mc_samples = 32;
  std::uint64_t seed = 0;
  /// Initial variance of every mean-field factor.
  double init_variance = 1e-5;
  /// Initial log of the full-covariance scale diagonal.
  double init_log_scale = -11.512925464970229;  // log(1e-5)
  /// Mean-field training samples pre-activations instead of weights.
  bool local_reparameterisation = true;

  /// Throws ConfigError on non-positive fields.
  void validate() const;
  /// Optimiser steps per epoch: 1 for full batch, otherwise ⌈N / batch⌉.
  int steps_per_epoch(Eigen::Index n) const;
};

/// Monte Carlo ELBO estimate and its reparameterisation gradient.
struct ElboEstimate {
  double value = 0.0;
  double expected_loglik = 0.0;
  double kl = 0.0;
  Vector grad_mean;
  /// Mean-field: ∂/∂log_var. Full covariance: ∂/∂scale_param packed by pack_lower.
  Vector grad_scale;
  double grad_log_noise_var = 0.0;
};

Vector sample_posterior(const MeanFieldPosterior& q, Rng& rng);
Vector sample_posterior(const FullCovPosterior& q, Rng& rng);
Vector sample_posterior(const VariationalPosterior& q, Rng& rng);

double kl_meanfield_to_diag_prior(const MeanFieldPosterior& q, const PriorSpec& prior);
double kl_fullcov_to_diag_prior(const FullCovPosterior& q, const PriorSpec& prior);

/// ELBO with weight-space reparameterisation θ_m = μ + σ ⊙ z_m using the
/// columns of `noise` (P x M) as z. `lik_scale` multiplies the likelihood
/// sum (N / |batch| for minibatches).
ElboEstimate elbo_estimate_with_noise(const Architecture& arch, const MeanFieldPosterior& q,
                                      const Dataset& data, const PriorSpec& prior,
                                      const LikelihoodSpec& lik, const Matrix& noise,
                                      double lik_scale = 1.0);
/// Full-covariance variant, θ_m = μ + L z_m.
ElboEstimate elbo_estimate_with_noise(const Architecture& arch, const FullCovPosterior& q,
                                      const Dataset& data, const PriorSpec& prior,
                                      const LikelihoodSpec& lik, const Matrix& noise,
                                      double lik_scale = 1.0);

/// (1/M) Σ_m Σ_n log p(y_n | θ_m, x_n) − KL(q ‖ p) with fresh noise from `rng`.
ElboEstimate elbo_estimate(const Architecture& arch, const VariationalPosterior& q,
                           const Dataset& data, const PriorSpec& prior,
                           const LikelihoodSpec& lik, int samples, Rng& rng,
                           double lik_scale = 1.0);

/// Mean-field ELBO where each layer's pre-activations are sampled from their
/// induced Gaussian with fresh noise per datapoint.
ElboEstimate elbo_estimate_local(const Architecture& arch, const MeanFieldPosterior& q,
                                 const Dataset& data, const PriorSpec& prior,
                                 const LikelihoodSpec& lik, int samples, Rng& rng,
                                 double lik_scale = 1.0);

/// One sampled network output per row of `x` (N x K) under the local
/// reparameterisation. Throws UnsupportedPosterior for full-covariance q.
Matrix local_reparam_forward(const Architecture& arch, const VariationalPosterior& q,
                             const Matrix& x, Rng& rng);

/// Weight means ~ N(0, 1/√(4·fan_out)) (variance), bias means 0, all
/// variances `init_variance`.
MeanFieldPosterior init_meanfield(const Architecture& arch, double init_variance, Rng& rng);
/// Mean ~ N(0, 0.1) (variance), L = exp(init_log_scale)·I.
FullCovPosterior init_fullcov(const Architecture& arch, double init_log_scale, Rng& rng);

template <typename Posterior>
struct VIResult {
  Posterior q;
  LikelihoodSpec lik;
  double initial_elbo = 0.0;
  double final_elbo = 0.0;
  std::size_t steps = 0;
};

using MfviResult = VIResult<MeanFieldPosterior>;
using FcviResult = VIResult<FullCovPosterior>;

template <typename Posterior>
using VIObserver =
    std::function<void(std::size_t step, const Posterior& q, const LikelihoodSpec& lik)>;

/// Adam on −ELBO. σ_o is learned when `lik.trainable`. Throws NonFiniteLoss
/// with the iteration and parameter norm if the objective diverges.
MfviResult train_mfvi(const Architecture& arch, const Dataset& data, const PriorSpec& prior,
                      const LikelihoodSpec& lik, const TrainConfig& config,
                      const VIObserver<MeanFieldPosterior>& observer = {});
/// Starts from a caller-provided posterior instead of init_meanfield.
MfviResult train_mfvi_from(const Architecture& arch, const Dataset& data, const PriorSpec& prior,
                           const LikelihoodSpec& lik, const TrainConfig& config,
                           MeanFieldPosterior q0,
                           const VIObserver<MeanFieldPosterior>& observer = {});

FcviResult train_fcvi(const Architecture& arch, const Dataset& data, const PriorSpec& prior,
                      const LikelihoodSpec& lik, const TrainConfig& config,
                      const VIObserver<FullCovPosterior>& observer = {});
FcviResult train_fcvi_from(const Architecture& arch, const Dataset& data, const PriorSpec& prior,
                           const LikelihoodSpec& lik, const TrainConfig& config,
                           FullCovPosterior q0,
                           const VIObserver<FullCovPosterior>& observer = {});

/// Indices for one minibatch drawn uniformly with replacement.
std::vector<std::size_t> sample_minibatch(Eigen::Index n, int batch_size, Rng& rng);

}  // namespace ibnn
