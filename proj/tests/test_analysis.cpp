#include <doctest.h>

#include <numbers>
#include <regex>

#include "ibnn/analysis.hpp"
#include "ibnn/laplace.hpp"
#include "ibnn/svg.hpp"
#include "oracles.hpp"

using namespace ibnn;

namespace {

MfOutputLayer random_layer(Rng& rng, Eigen::Index d, Eigen::Index h, Activation act) {
  MfOutputLayer l;
  l.activation = act;
  l.u.resize(h, d);
  rng.fill_normal(l.u);
  l.v = rng.normal_vector(h);
  l.w_mean = rng.normal_vector(h);
  l.b_mean = rng.normal();
  l.w_var = rng.normal_vector(h).array().exp();
  l.b_var = rng.uniform(0.1, 1.0);
  return l;
}

Matrix fd_hessian(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  const Eigen::Index d = x.size();
  Matrix out(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      auto at = [&](double si, double sj) {
        Vector y = x;
        y[i] += si * h;
        y[j] += sj * h;
        return f(y);
      };
      out(i, j) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h * h);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("test_ll_gaussian") {
  CHECK(test_ll_gaussian({0.3, 1.0}, 0.3) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double m = rng.normal(), v = std::exp(rng.normal()), y = 3 * rng.normal();
    CHECK(std::abs(test_ll_gaussian({m, v}, y) - oracle::normal_logpdf(y, m, v)) < 1e-12);
    MixturePredictive one{Vector::Constant(1, m), v};
    CHECK(test_ll_mixture(one, y) == doctest::Approx(test_ll_gaussian({m, v}, y)).epsilon(1e-14));
  }
}

TEST_CASE("test_ll_mixture") {
  MixturePredictive one{Vector::Constant(1, 0.5), 1.0};
  CHECK(test_ll_mixture(one, 0.5) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)));
  MixturePredictive same{Vector::Constant(17, 0.2), 0.3};
  CHECK(test_ll_mixture(same, 1.1) == doctest::Approx(oracle::normal_logpdf(1.1, 0.2, 0.3)).epsilon(1e-13));

  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    MixturePredictive p{rng.normal_vector(10), std::exp(0.5 * rng.normal())};
    const double y = rng.normal();
    double direct = 0.0;
    for (Eigen::Index m = 0; m < p.means.size(); ++m) direct += std::exp(oracle::normal_logpdf(y, p.means[m], p.noise_var));
    CHECK(std::abs(test_ll_mixture(p, y) - std::log(direct / 10.0)) < 1e-10);
    MixturePredictive rev{p.means.reverse(), p.noise_var};
    CHECK(test_ll_mixture(rev, y) == doctest::Approx(test_ll_mixture(p, y)).epsilon(1e-14));
  }
  // Far from every component a larger noise gives a higher density.
  MixturePredictive a{rng.normal_vector(5), 0.1}, b = a;
  b.noise_var = 0.2;
  CHECK(test_ll_mixture(b, 100.0) > test_ll_mixture(a, 100.0));
  MixturePredictive far{Vector::Zero(3), 1.0};
  CHECK(std::isfinite(test_ll_mixture(far, 1e4)));
}

TEST_CASE("band_from_outputs") {
  Matrix out(2, 3);
  out << 1, 2, 3, 3, 2, 1;
  const auto band = band_from_outputs(out);
  CHECK(band.mean == Vector::Constant(3, 2.0).eval());
  CHECK(band.std[0] == doctest::Approx(1.0));
  CHECK(band.std[1] == 0.0);
}

TEST_CASE("mf_output_variance closed form") {
  MfOutputLayer l;
  l.activation = Activation::Relu;
  l.u = Matrix::Ones(1, 1);
  l.v = Vector::Constant(1, 1.0);
  l.w_mean = Vector::Zero(1);
  l.w_var = Vector::Constant(1, 2.0);
  l.b_var = 1.0;
  // φ(1·0 + 1) = 1
  CHECK(mf_output_variance(l, Vector::Zero(1)) == doctest::Approx(3.0));
  // x = -5 switches the unit off
  CHECK(mf_output_variance(l, Vector::Constant(1, -5.0)) == doctest::Approx(1.0));

  Rng rng(3);
  const auto r = random_layer(rng, 2, 4, Activation::Relu);
  const Vector x = rng.normal_vector(2);
  const Vector phi = (r.u * x + r.v).cwiseMax(0.0);
  const int n = 1000000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double f = r.b_mean + std::sqrt(r.b_var) * rng.normal();
    for (int k = 0; k < 4; ++k) f += (r.w_mean[k] + std::sqrt(r.w_var[k]) * rng.normal()) * phi[k];
    sum += f;
    sq += f * f;
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  const double exact = mf_output_variance(r, x);
  CHECK(std::abs(var - exact) < 3.0 * exact * std::sqrt(2.0 / n));
  CHECK(exact >= r.b_var);
}

TEST_CASE("variance_hessian: zero variance, PSD and finite differences") {
  Rng rng(4);
  auto z = random_layer(rng, 2, 5, Activation::Relu);
  z.w_var.setZero();
  CHECK(variance_hessian(z, rng.normal_vector(2)).h.norm() == 0.0);

  for (auto act : {Activation::Relu, Activation::Tanh}) {
    for (int trial = 0; trial < 30; ++trial) {
      const auto l = random_layer(rng, 3, 6, act);
      const Vector x = rng.normal_vector(3);
      const auto vh = variance_hessian(l, x);
      if (act == Activation::Relu) CHECK(min_eigenvalue_symmetric(vh.h) >= -1e-10);
      const Matrix fd = fd_hessian([&](const Vector& y) { return mf_output_variance(l, y); }, x, 1e-4);
      const double scale = std::max(fd.norm(), vh.h.norm());
      if (scale > 0) CHECK((fd - vh.h).norm() / scale < 1e-4);
    }
  }
}

TEST_CASE("convexity_probe") {
  const Vector a = Vector::Constant(1, -1.0), b = Vector::Constant(1, 1.0);
  const auto flat = convexity_probe([](const Vector&) { return 2.0; }, a, b, 21);
  CHECK(flat.violations == 0);
  CHECK(flat.pairs_checked > 0);
  const auto bump = convexity_probe([](const Vector& x) { return std::exp(-x.squaredNorm()); }, a, b, 21);
  CHECK(bump.violations > 0);
  CHECK(bump.worst_violation > 0.0);

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto l = random_layer(rng, 2, 8, Activation::Relu);
    const auto rep = convexity_probe([&](const Vector& x) { return mf_output_variance(l, x); },
                                     3 * rng.normal_vector(2), 3 * rng.normal_vector(2), 41);
    CHECK(rep.violations == 0);
  }
}

TEST_CASE("conjugate_linear matches the regression oracle") {
  Rng rng(6);
  Matrix phi(30, 5);
  rng.fill_normal(phi);
  const Vector y = rng.normal_vector(30);
  const Vector prior_var = (rng.normal_vector(5).array().square() + 0.5).matrix();
  const auto c = conjugate_linear(phi, y, prior_var, 0.3);
  const auto ref = oracle::blr(phi, y, prior_var, 0.3);
  CHECK((c.mean - ref.mean).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((c.covariance() - ref.cov).cwiseAbs().maxCoeff() < 1e-8);
  for (int i = 0; i < 10; ++i) {
    const Vector f = rng.normal_vector(5);
    CHECK(std::abs(c.function_variance(f) - f.dot(ref.cov * f)) < 1e-8);
    CHECK(std::abs(c.predictive(f).variance - (0.3 + f.dot(ref.cov * f))) < 1e-8);
  }
}

TEST_CASE("BLR with a flat prior and square features interpolates") {
  // One hidden ReLU unit plus the bias feature: two points, two output parameters.
  const auto arch = Architecture::mlp(1, {1}, 1, Activation::Relu);
  Vector theta(4);
  theta << 1.0, 0.0, 0.0, 0.0;  // U = 1, v = 0
  Dataset d;
  d.x.resize(2, 1);
  d.x << 0.5, 2.0;
  d.y.resize(2, 1);
  d.y << 1.0, -3.0;
  const auto blr = blr_last_layer(arch, theta, d, Vector::Constant(2, 1e12), 1e-10);
  for (int i = 0; i < 2; ++i) CHECK(blr.predictive(d.x.row(i).transpose()).mean == doctest::Approx(d.y(i, 0)).epsilon(1e-6));
}

TEST_CASE("maximum-likelihood input prior flattens only the input layer") {
  const auto arch = Architecture::mlp(2, {3}, 1, Activation::Relu);
  const auto base = PriorSpec::uniform(arch, 1.0);
  const auto ml = maximum_likelihood_input_prior(arch, base);
  const auto layers = arch.layers();
  CHECK(ml.variances[layers[0].weight_offset] == 1e12);
  CHECK(ml.variances[layers[0].bias_offset] == 1e12);
  CHECK(ml.variances[layers[1].weight_offset] == 1.0);
}

TEST_CASE("two-unit network: regions, exact agreement, exact fit") {
  TwoUnitParams p{0.5, 0.5, 1.0, 1.0, 0.25, -0.25, 0.7};
  CHECK(two_unit_region(p, -1.0) == 0);
  CHECK(two_unit_piecewise(p, -1.0) == 0.7);
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    TwoUnitParams q{rng.uniform(0.1, 2), rng.uniform(0.1, 2), rng.uniform(0.1, 2),
                    rng.uniform(0.1, 2), rng.normal(), rng.normal(), rng.normal()};
    const double x = rng.uniform(-5, 5);
    CHECK(two_unit_piecewise(q, x) == forward(q.architecture(), q.theta(), Vector::Constant(1, x))[0]);
  }
  TwoUnitParams exact{0.5, 0.5, 1.0, 1.0, 0.25, -0.25, 0.0};
  const auto r = fit_residual(exact, -1.0, 0.0, 1.0, 1.0);
  CHECK(r.left == 0.0);
  CHECK(r.right == 0.0);
  CHECK_THROWS_AS(fit_residual(exact, 0.0, 0.0, 1.0, 1.0), RegionAssumptionViolated);
  TwoUnitParams neg = exact;
  neg.w1 = -1.0;
  CHECK_THROWS_AS(two_unit_piecewise(neg, 0.0), RegionAssumptionViolated);
}

TEST_CASE("uncertainty_ratio") {
  Vector probes(9), std(9);
  for (int i = 0; i < 9; ++i) probes[i] = -2.0 + 0.5 * i;
  std.setConstant(0.3);
  const std::vector<Interval> data{{-2.0, -1.0}, {1.0, 2.0}};
  const std::vector<Interval> gap{{-0.99, 0.99}};
  CHECK(uncertainty_ratio(probes, std, data, gap) == doctest::Approx(1.0));
  for (int i = 0; i < 9; ++i) {
    if (std::abs(probes[i]) < 1.0) std[i] = 0.3 * std::sqrt(2.0);
  }
  CHECK(uncertainty_ratio(probes, std, data, gap) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(uncertainty_ratio(probes, std, data, {{5.0, 6.0}}), EmptyRegion);
  CHECK_THROWS_AS(uncertainty_ratio(probes, std, data, {{-1.5, 0.0}}), ConfigError);
}

TEST_CASE("pair plot of identical series puts every point on y = x") {
  const std::vector<double> a{-3.1, -2.7, -2.2, -2.9, -4.0};
  const std::string s = svg::pair_plot("m", "m", a, a);
  const std::regex circle(R"re(<circle cx="([-0-9.]+)" cy="([-0-9.]+)")re");
  int n = 0;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), circle); it != std::sregex_iterator(); ++it) {
    // px(v) = 55 + 260·t and py(v) = 315 − 260·t for the same t
    CHECK(std::stod((*it)[1]) + std::stod((*it)[2]) == doctest::Approx(370.0).epsilon(1e-4));
    ++n;
  }
  CHECK(n == 5);
  CHECK(s == svg::pair_plot("m", "m", a, a));
}
