#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ibnn/data.hpp"
#include "ibnn/model.hpp"
#include "ibnn/predictive.hpp"

namespace ibnn {

/// log N(y; mean, variance).
double test_ll_gaussian(const GaussianPredictive& pred, double y);

/// log[(1/M) Σ_m N(y; means_m, noise_var)] via log-sum-exp.
double test_ll_mixture(const MixturePredictive& pred, double y);

/// Network outputs for every sample at every row of `x`: M×N (single output).
Matrix sample_outputs(const Architecture& arch, const std::vector<Vector>& samples,
                      const Matrix& x);

/// Pointwise mean and standard deviation of function values (no output noise).
struct FunctionBand {
  Vector mean;
  Vector std;
};

/// Column moments of an M×N matrix of sampled outputs.
FunctionBand band_from_outputs(const Matrix& outputs);

/// A one-hidden-layer network with a deterministic input layer (U, v) and
/// an independent Gaussian over the output weights and bias.
struct MfOutputLayer {
  Activation activation = Activation::Relu;
  Matrix u;  // H x D
  Vector v;  // H
  Vector w_mean;
  double b_mean = 0.0;
  Vector w_var;
  double b_var = 0.0;

  /// Takes (U, v) and the output means from θ, and output-layer variances
  /// from the matching entries of `param_variances` (length P).
  static MfOutputLayer from_params(const Architecture& arch, const Vector& theta,
                                   const Vector& param_variances);

  Eigen::Index hidden() const { return v.size(); }
  Eigen::Index input_dim() const { return u.cols(); }
};

/// Σ_i Var[W_i] φ(a_i)² + Var[b].
double mf_output_variance(const MfOutputLayer& layer, const Vector& x);

struct VarianceHessian {
  Matrix h;
  /// Set when a ReLU pre-activation was within 1e-8 of the kink and was
  /// moved off it by 1e-6.
  bool kink_proximity = false;
};

/// Σ_i 2 Var[W_i] (φ φ'' + φ'²)(a_i) u_i u_iᵀ.
VarianceHessian variance_hessian(const MfOutputLayer& layer, const Vector& x);

struct ConvexityReport {
  std::size_t pairs_checked = 0;
  std::size_t violations = 0;
  /// max over pairs of Var(mid) − ½(Var(x1) + Var(x2)); ≤ tolerance when convex.
  double worst_violation = -std::numeric_limits<double>::infinity();
  double witness_t1 = 0.0;
  double witness_t2 = 0.0;

  nlohmann::json to_json() const;
};

/// Midpoint-convexity check on `n_points` evenly spaced points of the
/// segment [x_a, x_b], over every pair whose midpoint is itself a grid point.
ConvexityReport convexity_probe(const std::function<double(const Vector&)>& variance_fn,
                                const Vector& x_a, const Vector& x_b, int n_points,
                                double tolerance = 1e-9);

/// Exact Gaussian posterior of a linear-in-features regression with a
/// diagonal prior: precision = ΦᵀΦ/σ² + diag(1/prior_var).
struct ConjugateLinear {
  Vector mean;
  Matrix precision;
  CholeskyFactor precision_chol;
  double noise_var = 1.0;

  /// Function-value variance φᵀ Σ φ, computed by a triangular solve.
  double function_variance(const Vector& phi) const;
  GaussianPredictive predictive(const Vector& phi) const;
  Matrix covariance() const;
};

ConjugateLinear conjugate_linear(const Matrix& phi, const Vector& y, const Vector& prior_var,
                                 double noise_var);

/// Last-layer features [φ(Ux + v), 1] of a one-hidden-layer network.
Matrix hidden_features(const MfOutputLayer& layer, const Matrix& x);

/// Bayesian linear regression on the output layer of a trained
/// one-hidden-layer network with the input layer held fixed.
struct BlrLastLayer {
  MfOutputLayer features;  // only activation, u, v are meaningful
  ConjugateLinear posterior;

  double function_variance(const Vector& x) const;
  GaussianPredictive predictive(const Vector& x) const;
};

/// `output_prior_var` holds H output-weight variances followed by the bias variance.
BlrLastLayer blr_last_layer(const Architecture& arch, const Vector& theta, const Dataset& data,
                            const Vector& output_prior_var, double noise_var);

/// The optimal mean-field Gaussian over the output layer for the same
/// conjugate model: exact posterior mean, variance 1/Λ_ii.
MfOutputLayer mfvi_output_layer(const BlrLastLayer& blr);

/// Prior variances that make the input layer of a one-hidden-layer
/// network effectively unregularised, keeping `base` on the output layer.
PriorSpec maximum_likelihood_input_prior(const Architecture& arch, const PriorSpec& base,
                                         double flat_variance = 1e12);

/// Two ReLU units on a scalar input: y = b + W1 relu(U1 x + v1) + W2 relu(U2 x + v2).
struct TwoUnitParams {
  double w1 = 1.0, w2 = 1.0, u1 = 1.0, u2 = 1.0, v1 = 0.0, v2 = 0.0, b = 0.0;

  Architecture architecture() const;
  Vector theta() const;
};

/// Number of active units at x (region I, II or III as 0, 1, 2).
int two_unit_region(const TwoUnitParams& p, double x);

/// Region-wise closed form. Requires W, U > 0; matches forward() bit for bit.
double two_unit_piecewise(const TwoUnitParams& p, double x);

struct FitResidual {
  /// |b − y1| for the point in region I.
  double left = 0.0;
  /// |(W1U1 + W2U2)x2 + W1v1 + W2v2 + b − y2| for the point in region III.
  double right = 0.0;
};

FitResidual fit_residual(const TwoUnitParams& p, double x1, double y1, double x2, double y2);

/// Mean predictive std over probes inside `gap` ÷ mean over probes inside
/// `data`. Data intervals are closed, gap intervals open, so the two may
/// share endpoints. Throws EmptyRegion when either side has no probe.
double uncertainty_ratio(const Vector& probes, const Vector& std,
                         const std::vector<Interval>& data, const std::vector<Interval>& gap);

}  // namespace ibnn
