#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ibnn/model.hpp"

namespace ibnn {

struct HMCConfig {
  int min_leapfrog_steps = 5;
  int max_leapfrog_steps = 10;
  double min_step_size = 0.001;
  double max_step_size = 0.0015;
  int burn_in = 10000;
  int n_samples = 20000;
  /// Evenly spaced draws retained from the post-burn-in iterations.
  int kept_samples = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Unnormalised log density; writes ∇ log p into `grad`.
using LogDensityFn = std::function<double(const Vector& theta, Vector& grad)>;

struct ChainState {
  Vector theta;
  double log_density = 0.0;
  Vector grad;
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  std::size_t divergences = 0;

  double acceptance_rate() const {
    return proposals == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposals);
  }
};

ChainState make_chain_state(Vector theta, const LogDensityFn& target);

struct LeapfrogResult {
  Vector theta;
  Vector momentum;
  double log_density = 0.0;
  Vector grad;
  /// False when the trajectory produced a non-finite state.
  bool finite = true;
};

/// Half kick, drift, half kick with an identity mass matrix. `grad` is
/// ∇ log p at `theta`.
LeapfrogResult leapfrog(const Vector& theta, const Vector& momentum, const Vector& grad,
                        double step_size, int steps, const LogDensityFn& target);

/// One HMC transition with freshly drawn momentum, step size and path
/// length. Non-finite trajectories count as rejections.
ChainState hmc_step(ChainState state, const HMCConfig& config, const LogDensityFn& target,
                    Rng& rng);

struct ChainResult {
  std::vector<Vector> samples;
  double acceptance_rate = 0.0;
  std::size_t divergences = 0;
  std::vector<std::string> warnings;
};

/// Burn-in, then keep `kept_samples` evenly spaced states of the next
/// `n_samples` iterations.
ChainResult run_chain(const LogDensityFn& target, Vector theta0, const HMCConfig& config);

/// Samples the BNN posterior with σ_o held at `lik`.
ChainResult run_chain(const Architecture& arch, const Dataset& data, const PriorSpec& prior,
                      const LikelihoodSpec& lik, const HMCConfig& config, Vector theta0);

/// Gelman-Rubin potential scale reduction over two or more chains.
double rhat(const std::vector<std::vector<double>>& chains);

/// Effective sample size from Geyer's initial positive sequence.
double effective_sample_size(const std::vector<double>& draws);

}  // namespace ibnn
