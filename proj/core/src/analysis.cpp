#include "ibnn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ibnn {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kKinkRadius = 1e-8;
constexpr double kKinkShift = 1e-6;

void require_one_hidden_layer(const Architecture& arch, const char* what) {
  if (arch.hidden_widths.size() != 1 || arch.output_dim != 1) {
    throw ArchitectureUnsupported(std::string(what) +
                                  " needs one hidden layer and a single output");
  }
}

double log_normal(double y, double mean, double variance) {
  const double r = y - mean;
  return -0.5 * (kLog2Pi + std::log(variance) + r * r / variance);
}

Vector pre_activations(const MfOutputLayer& layer, const Vector& x) {
  if (x.size() != layer.input_dim()) throw DimensionMismatch("probe input width");
  return layer.u * x + layer.v;
}

}  // namespace

double test_ll_gaussian(const GaussianPredictive& pred, double y) {
  if (!(pred.variance > 0.0)) throw ConfigError("predictive variance must be positive");
  return log_normal(y, pred.mean, pred.variance);
}

double test_ll_mixture(const MixturePredictive& pred, double y) {
  const Eigen::Index m = pred.means.size();
  if (m < 1) throw ConfigError("mixture needs at least one component");
  if (!(pred.noise_var > 0.0)) throw ConfigError("mixture noise variance must be positive");
  Vector terms(m);
  for (Eigen::Index i = 0; i < m; ++i) terms[i] = log_normal(y, pred.means[i], pred.noise_var);
  const double top = terms.maxCoeff();
  if (m == 1) return top;
  const double sum = (terms.array() - top).exp().sum();
  return top + std::log(sum) - std::log(static_cast<double>(m));
}

Matrix sample_outputs(const Architecture& arch, const std::vector<Vector>& samples,
                      const Matrix& x) {
  if (arch.output_dim != 1) throw ArchitectureUnsupported("sample_outputs: single output only");
  Matrix out(static_cast<Eigen::Index>(samples.size()), x.rows());
  for (std::size_t m = 0; m < samples.size(); ++m) {
    out.row(static_cast<Eigen::Index>(m)) = forward_batch(arch, samples[m], x).col(0).transpose();
  }
  return out;
}

FunctionBand band_from_outputs(const Matrix& outputs) {
  if (outputs.rows() < 1) throw ConfigError("band_from_outputs: no samples");
  FunctionBand band;
  band.mean = outputs.colwise().mean().transpose();
  band.std.resize(outputs.cols());
  for (Eigen::Index n = 0; n < outputs.cols(); ++n) {
    band.std[n] = std::sqrt((outputs.col(n).array() - band.mean[n]).square().mean());
  }
  return band;
}

MfOutputLayer MfOutputLayer::from_params(const Architecture& arch, const Vector& theta,
                                         const Vector& param_variances) {
  require_one_hidden_layer(arch, "MfOutputLayer");
  if (theta.size() != arch.num_params() || param_variances.size() != arch.num_params()) {
    throw DimensionMismatch("MfOutputLayer: parameter vector length");
  }
  const auto layers = unflatten(arch, theta);
  const auto layout = arch.layers();
  const auto& out = layout[1];
  MfOutputLayer layer;
  layer.activation = arch.activation;
  layer.u = layers[0].weight;
  layer.v = layers[0].bias;
  layer.w_mean = layers[1].weight.row(0).transpose();
  layer.b_mean = layers[1].bias[0];
  layer.w_var = param_variances.segment(out.weight_offset, out.fan_in);
  layer.b_var = param_variances[out.bias_offset];
  return layer;
}

double mf_output_variance(const MfOutputLayer& layer, const Vector& x) {
  const Vector a = pre_activations(layer, x);
  double var = layer.b_var;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double phi = activate(layer.activation, a[i]);
    var += layer.w_var[i] * phi * phi;
  }
  return var;
}

VarianceHessian variance_hessian(const MfOutputLayer& layer, const Vector& x) {
  const Vector a = pre_activations(layer, x);
  VarianceHessian out;
  out.h = Matrix::Zero(x.size(), x.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    double curvature = 0.0;
    if (layer.activation == Activation::Relu) {
      double ai = a[i];
      if (std::abs(ai) < kKinkRadius) {
        out.kink_proximity = true;
        ai += kKinkShift;
      }
      // φ'' vanishes off the kink, so φφ'' + φ'² is the indicator of a > 0.
      curvature = ai > 0.0 ? 1.0 : 0.0;
    } else {
      const double t = std::tanh(a[i]);
      curvature = (1.0 - t * t) * (1.0 - 3.0 * t * t);
    }
    const Vector ui = layer.u.row(i).transpose();
    out.h.noalias() += (2.0 * layer.w_var[i] * curvature) * ui * ui.transpose();
  }
  return out;
}

nlohmann::json ConvexityReport::to_json() const {
  return {{"pairs_checked", pairs_checked},
          {"violations", violations},
          {"worst_violation", worst_violation},
          {"witness", {witness_t1, witness_t2}}};
}

ConvexityReport convexity_probe(const std::function<double(const Vector&)>& variance_fn,
                                const Vector& x_a, const Vector& x_b, int n_points,
                                double tolerance) {
  if (x_a.size() != x_b.size()) throw DimensionMismatch("convexity_probe: endpoints");
  if (x_a == x_b) throw ConfigError("convexity_probe: endpoints coincide");
  if (n_points < 3) throw ConfigError("convexity_probe: need at least 3 points");
  std::vector<double> t(static_cast<std::size_t>(n_points));
  std::vector<double> values(t.size());
  for (int i = 0; i < n_points; ++i) {
    t[static_cast<std::size_t>(i)] = static_cast<double>(i) / (n_points - 1);
    values[static_cast<std::size_t>(i)] =
        variance_fn(x_a + t[static_cast<std::size_t>(i)] * (x_b - x_a));
  }
  ConvexityReport report;
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = i + 2; j < t.size(); j += 2) {
      const double gap = values[(i + j) / 2] - 0.5 * (values[i] + values[j]);
      ++report.pairs_checked;
      if (gap > tolerance) ++report.violations;
      if (gap > report.worst_violation) {
        report.worst_violation = gap;
        report.witness_t1 = t[i];
        report.witness_t2 = t[j];
      }
    }
  }
  return report;
}

double ConjugateLinear::function_variance(const Vector& phi) const {
  return precision_chol.solve_lower(phi).squaredNorm();
}

GaussianPredictive ConjugateLinear::predictive(const Vector& phi) const {
  return {mean.dot(phi), noise_var + function_variance(phi)};
}

Matrix ConjugateLinear::covariance() const {
  const Matrix linv = precision_chol.lower().triangularView<Eigen::Lower>().solve(
      Matrix::Identity(mean.size(), mean.size()));
  return linv.transpose() * linv;
}

ConjugateLinear conjugate_linear(const Matrix& phi, const Vector& y, const Vector& prior_var,
                                 double noise_var) {
  if (phi.rows() != y.size() || phi.cols() != prior_var.size()) {
    throw DimensionMismatch("conjugate_linear: shapes");
  }
  if (!(noise_var > 0.0) || (prior_var.array() <= 0.0).any()) {
    throw ConfigError("conjugate_linear: variances must be positive");
  }
  ConjugateLinear post;
  post.noise_var = noise_var;
  post.precision = Matrix::Zero(phi.cols(), phi.cols());
  post.precision.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose(), 1.0 / noise_var);
  post.precision.diagonal() += prior_var.cwiseInverse();
  post.precision = post.precision.selfadjointView<Eigen::Lower>();
  post.precision_chol = cholesky(post.precision);
  post.mean = solve_cholesky(post.precision_chol, phi.transpose() * y / noise_var);
  return post;
}

Matrix hidden_features(const MfOutputLayer& layer, const Matrix& x) {
  if (x.cols() != layer.input_dim()) throw DimensionMismatch("hidden_features: input width");
  Matrix phi(x.rows(), layer.hidden() + 1);
  Matrix a = x * layer.u.transpose();
  a.rowwise() += layer.v.transpose();
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    for (Eigen::Index i = 0; i < layer.hidden(); ++i) phi(n, i) = activate(layer.activation, a(n, i));
  }
  phi.col(layer.hidden()).setOnes();
  return phi;
}

double BlrLastLayer::function_variance(const Vector& x) const {
  const Matrix row = x.transpose();
  return posterior.function_variance(hidden_features(features, row).row(0).transpose());
}

GaussianPredictive BlrLastLayer::predictive(const Vector& x) const {
  const Matrix row = x.transpose();
  return posterior.predictive(hidden_features(features, row).row(0).transpose());
}

BlrLastLayer blr_last_layer(const Architecture& arch, const Vector& theta, const Dataset& data,
                            const Vector& output_prior_var, double noise_var) {
  require_one_hidden_layer(arch, "blr_last_layer");
  if (output_prior_var.size() != arch.hidden_widths[0] + 1) {
    throw DimensionMismatch("blr_last_layer: output prior length");
  }
  BlrLastLayer blr;
  blr.features = MfOutputLayer::from_params(arch, theta, Vector::Ones(theta.size()));
  blr.posterior = conjugate_linear(hidden_features(blr.features, data.x), data.y.col(0),
                                   output_prior_var, noise_var);
  return blr;
}

MfOutputLayer mfvi_output_layer(const BlrLastLayer& blr) {
  MfOutputLayer layer = blr.features;
  const Eigen::Index h = layer.hidden();
  layer.w_mean = blr.posterior.mean.head(h);
  layer.b_mean = blr.posterior.mean[h];
  const Vector var = blr.posterior.precision.diagonal().cwiseInverse();
  layer.w_var = var.head(h);
  layer.b_var = var[h];
  return layer;
}

PriorSpec maximum_likelihood_input_prior(const Architecture& arch, const PriorSpec& base,
                                         double flat_variance) {
  require_one_hidden_layer(arch, "maximum_likelihood_input_prior");
  PriorSpec prior = base;
  const auto first = arch.layers().front();
  prior.variances.head(first.bias_offset + first.fan_out).setConstant(flat_variance);
  return prior;
}

Architecture TwoUnitParams::architecture() const {
  return Architecture::mlp(1, {2}, 1, Activation::Relu);
}

Vector TwoUnitParams::theta() const {
  const Architecture arch = architecture();
  std::vector<LayerParams> layers(2);
  layers[0].weight.resize(2, 1);
  layers[0].weight << u1, u2;
  layers[0].bias.resize(2);
  layers[0].bias << v1, v2;
  layers[1].weight.resize(1, 2);
  layers[1].weight << w1, w2;
  layers[1].bias.resize(1);
  layers[1].bias << b;
  return flatten(arch, layers);
}

namespace {

void require_monotone(const TwoUnitParams& p) {
  if (!(p.w1 > 0.0 && p.w2 > 0.0 && p.u1 > 0.0 && p.u2 > 0.0)) {
    throw RegionAssumptionViolated("two-unit demo requires positive W and U");
  }
}

}  // namespace

int two_unit_region(const TwoUnitParams& p, double x) {
  require_monotone(p);
  double a1 = p.v1;
  a1 += p.u1 * x;
  double a2 = p.v2;
  a2 += p.u2 * x;
  return (a1 > 0.0 ? 1 : 0) + (a2 > 0.0 ? 1 : 0);
}

double two_unit_piecewise(const TwoUnitParams& p, double x) {
  require_monotone(p);
  // Pre-activations and the output sum use the same operation order as forward().
  double a1 = p.v1;
  a1 += p.u1 * x;
  double a2 = p.v2;
  a2 += p.u2 * x;
  double y = p.b;
  if (a1 > 0.0) y += p.w1 * a1;
  if (a2 > 0.0) y += p.w2 * a2;
  return y;
}

FitResidual fit_residual(const TwoUnitParams& p, double x1, double y1, double x2, double y2) {
  if (two_unit_region(p, x1) != 0) {
    throw RegionAssumptionViolated("x1 is not in the region where both units are inactive");
  }
  if (two_unit_region(p, x2) != 2) {
    throw RegionAssumptionViolated("x2 is not in the region where both units are active");
  }
  FitResidual r;
  r.left = std::abs(p.b - y1);
  r.right = std::abs((p.w1 * p.u1 + p.w2 * p.u2) * x2 + p.w1 * p.v1 + p.w2 * p.v2 + p.b - y2);
  return r;
}

double uncertainty_ratio(const Vector& probes, const Vector& std,
                         const std::vector<Interval>& data, const std::vector<Interval>& gap) {
  if (probes.size() != std.size()) throw DimensionMismatch("uncertainty_ratio: lengths");
  for (const auto& d : data) {
    for (const auto& g : gap) {
      if (d.lo < g.hi && g.lo < d.hi) throw ConfigError("uncertainty_ratio: regions overlap");
    }
  }
  double data_sum = 0.0, gap_sum = 0.0;
  int data_n = 0, gap_n = 0;
  for (Eigen::Index i = 0; i < probes.size(); ++i) {
    const double x = probes[i];
    if (std::any_of(data.begin(), data.end(), [x](const Interval& r) { return r.contains(x); })) {
      data_sum += std[i];
      ++data_n;
    } else if (std::any_of(gap.begin(), gap.end(),
                           [x](const Interval& r) { return x > r.lo && x < r.hi; })) {
      gap_sum += std[i];
      ++gap_n;
    }
  }
  if (data_n == 0) throw EmptyRegion("no probe falls in the data region");
  if (gap_n == 0) throw EmptyRegion("no probe falls in the gap region");
  return (gap_sum / gap_n) / (data_sum / data_n);
}

}  // namespace ibnn
