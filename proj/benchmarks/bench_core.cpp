#include <benchmark/benchmark.h>

#include "ibnn/analysis.hpp"
#include "ibnn/hmc.hpp"
#include "ibnn/laplace.hpp"
#include "ibnn/vi.hpp"

using namespace ibnn;

namespace {

struct Problem {
  Architecture arch;
  Dataset data;
  PriorSpec prior;
  LikelihoodSpec lik;
  Vector theta;
};

// Boston-sized regression with one hidden layer of `width` units.
Problem make_problem(Eigen::Index n, Eigen::Index width) {
  Problem p;
  p.arch = Architecture::mlp(13, {width}, 1, Activation::Tanh);
  Rng rng(7);
  p.data.x.resize(n, 13);
  p.data.y.resize(n, 1);
  rng.fill_normal(p.data.x);
  rng.fill_normal(p.data.y);
  p.prior = PriorSpec::fan_in_scaled(p.arch, 4.0);
  p.theta = 0.1 * rng.normal_vector(p.arch.num_params());
  return p;
}

void BM_ForwardBatch(benchmark::State& state) {
  const auto p = make_problem(state.range(0), 50);
  for (auto _ : state) benchmark::DoNotOptimize(forward_batch(p.arch, p.theta, p.data.x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBatch)->Arg(100)->Arg(1000);

void BM_ParamGradient(benchmark::State& state) {
  const auto p = make_problem(1, state.range(0));
  const Vector x = p.data.x.row(0).transpose();
  for (auto _ : state) benchmark::DoNotOptimize(param_gradient(p.arch, p.theta, x));
}
BENCHMARK(BM_ParamGradient)->Arg(10)->Arg(50);

void BM_LogJoint(benchmark::State& state) {
  const auto p = make_problem(state.range(0), 50);
  for (auto _ : state) benchmark::DoNotOptimize(log_joint(p.arch, p.theta, p.data, p.prior, p.lik));
}
BENCHMARK(BM_LogJoint)->Arg(100)->Arg(1000);

void BM_GaussNewtonPrecision(benchmark::State& state) {
  const auto p = make_problem(450, state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(gauss_newton_precision(p.arch, p.theta, p.data, p.prior, 0.1));
  }
}
BENCHMARK(BM_GaussNewtonPrecision)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_ElboMeanField(benchmark::State& state) {
  const auto p = make_problem(450, 50);
  Rng rng(3);
  const auto q = init_meanfield(p.arch, 1e-5, rng);
  const VariationalPosterior vq = q;
  const bool local = state.range(0) == 1;
  for (auto _ : state) {
    if (local) {
      benchmark::DoNotOptimize(elbo_estimate_local(p.arch, q, p.data, p.prior, p.lik, 32, rng));
    } else {
      benchmark::DoNotOptimize(elbo_estimate(p.arch, vq, p.data, p.prior, p.lik, 32, rng));
    }
  }
  state.SetLabel(local ? "local reparameterisation" : "weight space");
}
BENCHMARK(BM_ElboMeanField)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ElboFullCov(benchmark::State& state) {
  const auto p = make_problem(450, state.range(0));
  Rng rng(4);
  const VariationalPosterior q = init_fullcov(p.arch, -3.0, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(elbo_estimate(p.arch, q, p.data, p.prior, p.lik, 32, rng));
  }
}
BENCHMARK(BM_ElboFullCov)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_Leapfrog(benchmark::State& state) {
  const auto p = make_problem(450, 50);
  const LogDensityFn target = [&](const Vector& t, Vector& g) {
    auto ld = log_joint(p.arch, t, p.data, p.prior, p.lik);
    g = std::move(ld.grad);
    return ld.value;
  };
  Vector grad;
  target(p.theta, grad);
  const Vector momentum = Vector::Ones(p.theta.size());
  for (auto _ : state) {
    benchmark::DoNotOptimize(leapfrog(p.theta, momentum, grad, 1e-3, static_cast<int>(state.range(0)), target));
  }
}
BENCHMARK(BM_Leapfrog)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_MixtureLL(benchmark::State& state) {
  Rng rng(5);
  const MixturePredictive pred{rng.normal_vector(state.range(0)), 0.1};
  double y = 0.3;
  for (auto _ : state) benchmark::DoNotOptimize(test_ll_mixture(pred, y));
}
BENCHMARK(BM_MixtureLL)->Arg(100)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
