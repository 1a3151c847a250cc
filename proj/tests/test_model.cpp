#include <doctest.h>

#include <numbers>

#include "ibnn/model.hpp"
#include "oracles.hpp"

using namespace ibnn;

namespace {

Dataset noise_data(Rng& rng, Eigen::Index n, Eigen::Index d) {
  Dataset data;
  data.x.resize(n, d);
  data.y.resize(n, 1);
  rng.fill_normal(data.x);
  rng.fill_normal(data.y);
  return data;
}

}  // namespace

TEST_CASE("layout sizes") {
  const auto arch = Architecture::mlp(3, {5, 4}, 2, Activation::Tanh);
  CHECK(arch.num_params() == (3 * 5 + 5) + (5 * 4 + 4) + (4 * 2 + 2));
  Rng rng(1);
  const Vector theta = rng.normal_vector(arch.num_params());
  CHECK(flatten(arch, unflatten(arch, theta)) == theta);
  CHECK_THROWS_AS(Architecture::mlp(1, {0}, 1, Activation::Tanh).validate(), ConfigError);
}

TEST_CASE("forward edge cases") {
  const auto arch = Architecture::mlp(2, {4}, 1, Activation::Tanh);
  CHECK(forward(arch, Vector::Zero(arch.num_params()), Vector::Ones(2))[0] == 0.0);
  const auto one = Architecture::mlp(1, {1}, 1, Activation::Tanh);
  Vector theta(4);
  theta << 1, 0, 1, 0;
  CHECK(forward(one, theta, Vector::Zero(1))[0] == 0.0);
}

TEST_CASE("forward matches a straight-line evaluator") {
  Rng rng(2);
  for (bool relu : {false, true}) {
    for (int trial = 0; trial < 50; ++trial) {
      const auto arch = Architecture::mlp(1 + trial % 3, {7, 3}, 1 + trial % 2,
                                          relu ? Activation::Relu : Activation::Tanh);
      const Vector theta = rng.normal_vector(arch.num_params());
      const Vector x = rng.normal_vector(arch.input_dim);
      const std::vector<int> widths{static_cast<int>(arch.input_dim), 7, 3,
                                    static_cast<int>(arch.output_dim)};
      const auto ref = oracle::mlp(widths, relu, {theta.data(), theta.data() + theta.size()},
                                   {x.data(), x.data() + x.size()});
      const Vector out = forward(arch, theta, x);
      for (Eigen::Index k = 0; k < out.size(); ++k) CHECK(out[k] == doctest::Approx(ref[k]).epsilon(1e-13));
      const Matrix batch = forward_batch(arch, theta, x.transpose());
      CHECK((batch.row(0).transpose() - out).norm() < 1e-13);
    }
  }
}

TEST_CASE("param_gradient: bias entries and finite differences") {
  const auto arch = Architecture::mlp(2, {6}, 1, Activation::Tanh);
  const auto layers = arch.layers();
  const Eigen::Index out_bias = layers.back().bias_offset;
  const Vector g0 = param_gradient(arch, Vector::Zero(arch.num_params()), Vector::Ones(2)).row(0);
  CHECK(g0[out_bias] == 1.0);
  CHECK(g0.segment(layers.back().weight_offset, 6).norm() == 0.0);

  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Vector theta = rng.normal_vector(arch.num_params());
    const Vector x = rng.normal_vector(2);
    const Vector g = param_gradient(arch, theta, x).row(0);
    CHECK(g[out_bias] == 1.0);
    const Vector fd = oracle::fd_gradient([&](const Vector& t) { return forward(arch, t, x)[0]; }, theta);
    CHECK(oracle::rel_err(g, fd) < 1e-5);
  }
}

TEST_CASE("output_gradients and vector_jacobian_product agree with param_gradient") {
  const auto arch = Architecture::mlp(3, {5}, 1, Activation::Relu);
  Rng rng(4);
  const Vector theta = rng.normal_vector(arch.num_params());
  Matrix x(6, 3);
  rng.fill_normal(x);
  const Matrix g = output_gradients(arch, theta, x);
  Matrix cot(6, 1);
  rng.fill_normal(cot);
  Vector expect = Vector::Zero(arch.num_params());
  for (int n = 0; n < 6; ++n) {
    const Vector gn = param_gradient(arch, theta, x.row(n).transpose()).row(0);
    CHECK((g.row(n).transpose() - gn).norm() < 1e-12);
    expect += cot(n, 0) * gn;
  }
  CHECK((vector_jacobian_product(arch, theta, x, cot) - expect).norm() < 1e-12);
}

TEST_CASE("log_prior values and gradient") {
  PriorSpec p;
  p.variances = Vector::Ones(2);
  CHECK(log_prior(Vector::Zero(2), p) == doctest::Approx(-std::log(2 * std::numbers::pi)));
  PriorSpec one;
  one.variances = Vector::Ones(1);
  Vector t(1);
  t << 2.0;
  CHECK(log_prior(t, one) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi) - 2.0));
  CHECK(grad_log_prior(t, one)[0] == doctest::Approx(-2.0));

  Rng rng(5);
  PriorSpec r;
  r.variances = (rng.normal_vector(8).array().square() + 0.1).matrix();
  const Vector theta = rng.normal_vector(8);
  const Vector fd = oracle::fd_gradient([&](const Vector& th) { return log_prior(th, r); }, theta);
  CHECK(oracle::rel_err(grad_log_prior(theta, r), fd) < 1e-6);
}

TEST_CASE("prior constructors") {
  const auto arch = Architecture::mlp(3, {10}, 1, Activation::Tanh);
  const auto u = PriorSpec::uniform(arch, 2.0);
  CHECK((u.variances.array() == 4.0).all());
  const auto f = PriorSpec::fan_in_scaled(arch, 2.0);
  const auto layers = arch.layers();
  CHECK(f.variances[layers[0].weight_offset] == doctest::Approx(4.0 / 3.0));
  CHECK(f.variances[layers[1].weight_offset] == doctest::Approx(0.4));
  CHECK(f.variances[layers[1].bias_offset] == 1.0);
}

TEST_CASE("log_likelihood values") {
  const auto arch = Architecture::mlp(1, {3}, 1, Activation::Tanh);
  Rng rng(6);
  const Vector theta = rng.normal_vector(arch.num_params());
  Dataset d;
  d.x = Matrix::Constant(1, 1, 0.3);
  const double f = forward(arch, theta, d.x.row(0).transpose())[0];
  d.y = Matrix::Constant(1, 1, f);
  LikelihoodSpec lik;
  lik.log_noise_var = 0.0;
  CHECK(log_likelihood(arch, theta, d, lik).value ==
        doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)));
  d.y(0, 0) = f + 0.7;
  lik.log_noise_var = std::log(0.3);
  CHECK(log_likelihood(arch, theta, d, lik).value ==
        doctest::Approx(oracle::normal_logpdf(f + 0.7, f, 0.3)).epsilon(1e-12));
}

TEST_CASE("log_likelihood and log_joint gradients") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto arch = Architecture::mlp(2, {6}, 1, Activation::Tanh);
    const Dataset d = noise_data(rng, 12, 2);
    const Vector theta = rng.normal_vector(arch.num_params());
    LikelihoodSpec lik;
    lik.log_noise_var = rng.uniform(-2.0, 1.0);
    const PriorSpec prior = PriorSpec::uniform(arch, 1.5);
    const LogDensity ll = log_likelihood(arch, theta, d, lik);
    const LogDensity lj = log_joint(arch, theta, d, prior, lik);
    CHECK(oracle::rel_err(ll.grad, oracle::fd_gradient(
                                       [&](const Vector& t) { return log_likelihood(arch, t, d, lik).value; },
                                       theta)) < 1e-5);
    CHECK(oracle::rel_err(lj.grad, oracle::fd_gradient(
                                       [&](const Vector& t) { return log_joint(arch, t, d, prior, lik).value; },
                                       theta)) < 1e-5);
    auto by_noise = [&](double s) {
      LikelihoodSpec l2 = lik;
      l2.log_noise_var = s;
      return log_likelihood(arch, theta, d, l2).value;
    };
    const double h = 1e-5;
    const double fd = (by_noise(lik.log_noise_var + h) - by_noise(lik.log_noise_var - h)) / (2 * h);
    CHECK(ll.grad_log_noise_var == doctest::Approx(fd).epsilon(1e-6));
    CHECK(lj.value == doctest::Approx(ll.value + log_prior(theta, prior)).epsilon(1e-12));
  }
}

TEST_CASE("log_joint tends to the likelihood as prior precision vanishes") {
  Rng rng(8);
  const auto arch = Architecture::mlp(1, {4}, 1, Activation::Tanh);
  const Dataset d = noise_data(rng, 5, 1);
  const Vector theta = rng.normal_vector(arch.num_params());
  PriorSpec flat;
  flat.variances = Vector::Constant(arch.num_params(), 1e12);
  LikelihoodSpec lik;
  const auto lj = log_joint(arch, theta, d, flat, lik);
  const auto ll = log_likelihood(arch, theta, d, lik);
  CHECK((lj.grad - ll.grad).norm() < 1e-9);
}

TEST_CASE("minibatch scale multiplies the likelihood") {
  Rng rng(9);
  const auto arch = Architecture::mlp(1, {4}, 1, Activation::Relu);
  const Dataset d = noise_data(rng, 5, 1);
  const Vector theta = rng.normal_vector(arch.num_params());
  LikelihoodSpec lik;
  CHECK(log_likelihood(arch, theta, d, lik, 3.0).value ==
        doctest::Approx(3.0 * log_likelihood(arch, theta, d, lik).value));
}
