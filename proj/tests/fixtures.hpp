#pragma once

#include "ibnn/model.hpp"
#include "ibnn/vi.hpp"
#include "oracles.hpp"

namespace fixture {

using namespace ibnn;

/// Zero-hidden-layer regression problem y = wᵀx + b + ε with known
/// conjugate posterior. An orthogonal ±1 design makes that posterior
/// diagonal, which mean-field families can represent exactly.
struct LinearProblem {
  Architecture arch;
  Dataset data;
  PriorSpec prior;
  LikelihoodSpec lik;
  Matrix phi;  // [x, 1]
  oracle::Blr exact;
};

inline LinearProblem linear_problem(bool orthogonal, std::uint64_t seed, int n = 64) {
  LinearProblem p;
  p.arch = Architecture::mlp(2, {}, 1, Activation::Tanh);
  Rng rng(seed);
  p.data.x.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    if (orthogonal) {
      p.data.x(i, 0) = (i % 2 == 0) ? 1.0 : -1.0;
      p.data.x(i, 1) = ((i / 2) % 2 == 0) ? 1.0 : -1.0;
    } else {
      const double a = rng.normal();
      p.data.x(i, 0) = a;
      p.data.x(i, 1) = 0.8 * a + 0.6 * rng.normal();
    }
  }
  p.data.y.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    p.data.y(i, 0) = 0.7 * p.data.x(i, 0) - 0.4 * p.data.x(i, 1) + 0.2 + 0.5 * rng.normal();
  }
  p.prior = PriorSpec::uniform(p.arch, 1.0);
  p.lik.log_noise_var = std::log(0.25);
  p.lik.trainable = false;
  p.phi.resize(n, 3);
  p.phi << p.data.x, Vector::Ones(n);
  p.exact = oracle::blr(p.phi, p.data.y.col(0), p.prior.variances, 0.25);
  return p;
}

/// Runs VI to convergence on a linear problem: Adam phases with the
/// learning rate falling by 10 each time so the final iterate sits at the
/// optimum rather than jittering around it.
template <typename Result, typename First, typename Next>
Result converge_vi(First first, Next next, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = 3000;
  cfg.learning_rate = 0.01;
  cfg.mc_samples = 16;
  cfg.seed = seed;
  cfg.init_variance = 1e-3;
  cfg.init_log_scale = std::log(0.05);
  cfg.local_reparameterisation = false;
  Result r = first(cfg);
  const double initial = r.initial_elbo;
  for (double lr : {1e-3, 1e-4}) {
    cfg.learning_rate = lr;
    cfg.mc_samples = 64;
    cfg.seed += 1;
    r = next(cfg, r.q);
  }
  r.initial_elbo = initial;
  return r;
}

inline MfviResult converge_mfvi(const LinearProblem& p, std::uint64_t seed) {
  return converge_vi<MfviResult>(
      [&](const TrainConfig& c) { return train_mfvi(p.arch, p.data, p.prior, p.lik, c); },
      [&](const TrainConfig& c, const MeanFieldPosterior& q) {
        return train_mfvi_from(p.arch, p.data, p.prior, p.lik, c, q);
      },
      seed);
}

inline FcviResult converge_fcvi(const LinearProblem& p, std::uint64_t seed) {
  return converge_vi<FcviResult>(
      [&](const TrainConfig& c) { return train_fcvi(p.arch, p.data, p.prior, p.lik, c); },
      [&](const TrainConfig& c, const FullCovPosterior& q) {
        return train_fcvi_from(p.arch, p.data, p.prior, p.lik, c, q);
      },
      seed);
}

}  // namespace fixture
