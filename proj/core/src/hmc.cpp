#include "ibnn/hmc.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace ibnn {

void HMCConfig::validate() const {
  if (min_leapfrog_steps < 1 || max_leapfrog_steps < min_leapfrog_steps) {
    throw ConfigError("leapfrog step range must be a nonempty range of positive integers");
  }
  if (!(min_step_size > 0.0) || max_step_size < min_step_size) {
    throw ConfigError("step size range must be a nonempty interval of positive reals");
  }
  if (burn_in < 0 || n_samples < 1 || kept_samples < 1 || kept_samples > n_samples) {
    throw ConfigError("HMC counts must be positive and kept_samples <= n_samples");
  }
}

ChainState make_chain_state(Vector theta, const LogDensityFn& target) {
  ChainState state;
  state.grad = Vector::Zero(theta.size());
  state.log_density = target(theta, state.grad);
  state.theta = std::move(theta);
  if (!std::isfinite(state.log_density)) {
    throw NonFiniteLoss("HMC initial state has non-finite log density");
  }
  return state;
}

LeapfrogResult leapfrog(const Vector& theta, const Vector& momentum, const Vector& grad,
                        double step_size, int steps, const LogDensityFn& target) {
  if (!(step_size > 0.0) || steps < 1) {
    throw ConfigError("leapfrog requires a positive step size and at least one step");
  }
  LeapfrogResult out{theta, momentum, 0.0, grad, true};
  for (int l = 0; l < steps; ++l) {
    out.momentum += 0.5 * step_size * out.grad;
    out.theta += step_size * out.momentum;
    out.log_density = target(out.theta, out.grad);
    out.momentum += 0.5 * step_size * out.grad;
    if (!std::isfinite(out.log_density) || !out.theta.allFinite() || !out.momentum.allFinite()) {
      out.finite = false;
      return out;
    }
  }
  return out;
}

ChainState hmc_step(ChainState state, const HMCConfig& config, const LogDensityFn& target,
                    Rng& rng) {
  const Vector momentum = rng.normal_vector(state.theta.size());
  const double step_size = rng.uniform(config.min_step_size, config.max_step_size);
  const int steps =
      static_cast<int>(rng.uniform_int(config.min_leapfrog_steps, config.max_leapfrog_steps));
  const double u = rng.uniform();
  ++state.proposals;

  const LeapfrogResult prop =
      leapfrog(state.theta, momentum, state.grad, step_size, steps, target);
  if (!prop.finite) {
    ++state.divergences;
    return state;
  }
  const double h_old = -state.log_density + 0.5 * momentum.squaredNorm();
  const double h_new = -prop.log_density + 0.5 * prop.momentum.squaredNorm();
  const double delta_h = h_new - h_old;
  if (std::isfinite(delta_h) && u < std::exp(-delta_h)) {
    state.theta = prop.theta;
    state.grad = prop.grad;
    state.log_density = prop.log_density;
    ++state.accepted;
  }
  return state;
}

ChainResult run_chain(const LogDensityFn& target, Vector theta0, const HMCConfig& config) {
  config.validate();
  Rng rng(config.seed);
  ChainState state = make_chain_state(std::move(theta0), target);
  for (int i = 0; i < config.burn_in; ++i) state = hmc_step(std::move(state), config, target, rng);

  ChainResult result;
  const std::size_t burn_proposals = state.proposals;
  const std::size_t burn_accepted = state.accepted;
  result.samples.reserve(static_cast<std::size_t>(config.kept_samples));
  // Keep iteration ⌊(k+1)·n/kept⌋ − 1 for k = 0..kept−1.
  int next_keep = 0;
  auto keep_at = [&](int k) {
    return static_cast<int>((static_cast<long long>(k + 1) * config.n_samples) /
                            config.kept_samples) - 1;
  };
  int target_iter = keep_at(next_keep);
  for (int i = 0; i < config.n_samples; ++i) {
    state = hmc_step(std::move(state), config, target, rng);
    if (i == target_iter) {
      result.samples.push_back(state.theta);
      ++next_keep;
      if (next_keep < config.kept_samples) target_iter = keep_at(next_keep);
    }
  }
  result.acceptance_rate =
      static_cast<double>(state.accepted - burn_accepted) /
      static_cast<double>(state.proposals - burn_proposals);
  result.divergences = state.divergences;
  if (result.acceptance_rate < 0.01) {
    std::ostringstream msg;
    msg << "AcceptanceCollapse: acceptance rate " << result.acceptance_rate << " below 1%";
    result.warnings.push_back(msg.str());
  }
  return result;
}

ChainResult run_chain(const Architecture& arch, const Dataset& data, const PriorSpec& prior,
                      const LikelihoodSpec& lik, const HMCConfig& config, Vector theta0) {
  if (theta0.size() != arch.num_params()) throw DimensionMismatch("run_chain: initial point size");
  LogDensityFn target = [&](const Vector& theta, Vector& grad) {
    LogDensity lj = log_joint(arch, theta, data, prior, lik);
    grad = std::move(lj.grad);
    return lj.value;
  };
  return run_chain(target, std::move(theta0), config);
}

double rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw ConfigError("rhat needs at least two chains");
  const std::size_t n = chains.front().size();
  if (n < 2) throw ConfigError("rhat needs at least two draws per chain");
  std::vector<double> means;
  double within = 0.0;
  for (const auto& c : chains) {
    if (c.size() != n) throw DimensionMismatch("rhat: chains differ in length");
    const double m = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : c) ss += (v - m) * (v - m);
    within += ss / static_cast<double>(n - 1);
    means.push_back(m);
  }
  const double chains_d = static_cast<double>(chains.size());
  within /= chains_d;
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / chains_d;
  double between = 0.0;
  for (double m : means) between += (m - grand) * (m - grand);
  between *= static_cast<double>(n) / (chains_d - 1.0);
  const double nd = static_cast<double>(n);
  const double var_plus = (nd - 1.0) / nd * within + between / nd;
  if (within == 0.0) return between == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(var_plus / within);
}

double effective_sample_size(const std::vector<double>& draws) {
  const std::size_t n = draws.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double v : draws) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  if (var == 0.0) return static_cast<double>(n);
  auto autocorr = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) acc += (draws[i] - mean) * (draws[i + lag] - mean);
    return acc / (static_cast<double>(n) * var);
  };
  double sum = 0.0;
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    const double pair = autocorr(2 * k) + autocorr(2 * k + 1);
    if (pair <= 0.0) break;
    sum += pair;
  }
  const double tau = std::max(2.0 * sum - 1.0, 1.0 / static_cast<double>(n));
  return static_cast<double>(n) / tau;
}

}  // namespace ibnn
