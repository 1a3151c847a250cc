#pragma once

#include <string>
#include <vector>

#include "ibnn/dataset.hpp"
#include "ibnn/numerics.hpp"

namespace ibnn {

enum class Activation { Tanh, Relu };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

/// ReLU uses φ'(0) = 0.
double activate(Activation act, double a);
double activate_derivative(Activation act, double a);

/// Offsets of one dense layer inside the flat parameter vector. The weight
/// block is stored row-major (fan_out x fan_in) and followed by the bias.
struct LayerLayout {
  Eigen::Index fan_in = 0;
  Eigen::Index fan_out = 0;
  Eigen::Index weight_offset = 0;
  Eigen::Index bias_offset = 0;
};

struct Architecture {
  Eigen::Index input_dim = 1;
  std::vector<Eigen::Index> hidden_widths;
  Eigen::Index output_dim = 1;
  Activation activation = Activation::Tanh;

  static Architecture mlp(Eigen::Index input_dim, std::vector<Eigen::Index> hidden,
                          Eigen::Index output_dim, Activation act);

  /// Throws ConfigError when any width is zero.
  void validate() const;
  Eigen::Index num_params() const;
  std::vector<LayerLayout> layers() const;
  Eigen::Index num_layers() const {
    return static_cast<Eigen::Index>(hidden_widths.size()) + 1;
  }

  bool operator==(const Architecture&) const = default;
};

/// Weights and bias of one layer, unpacked.
struct LayerParams {
  Matrix weight;  // fan_out x fan_in
  Vector bias;
};

std::vector<LayerParams> unflatten(const Architecture& arch, const Vector& theta);
Vector flatten(const Architecture& arch, const std::vector<LayerParams>& layers);

/// Diagonal Gaussian prior N(0, diag(variances)).
struct PriorSpec {
  Vector variances;

  /// N(0, ω²) on every parameter.
  static PriorSpec uniform(const Architecture& arch, double omega);
  /// N(0, 1) on biases and N(0, ω²/fan_in) on weights.
  static PriorSpec fan_in_scaled(const Architecture& arch, double omega);

  Vector precision() const { return variances.cwiseInverse(); }
};

/// Homoscedastic Gaussian noise, parameterised by log σ_o².
struct LikelihoodSpec {
  double log_noise_var = -1.0;
  bool trainable = true;

  double noise_var() const;
};

/// A log density together with its gradient.
struct LogDensity {
  double value = 0.0;
  Vector grad;                       // with respect to θ
  double grad_log_noise_var = 0.0;  // with respect to log σ_o²
};

/// Single-input forward pass with plain loops. Each output is accumulated as
/// b_k + Σ_i W_ki·h_i in increasing i.
Vector forward(const Architecture& arch, const Vector& theta, const Vector& x);

/// Batched forward pass, N x K.
Matrix forward_batch(const Architecture& arch, const Vector& theta, const Matrix& x);

/// K x P Jacobian of the outputs with respect to θ at one input.
Matrix param_gradient(const Architecture& arch, const Vector& theta, const Vector& x);

/// N x P matrix whose row n is ∇_θ f(x_n). Requires K = 1.
Matrix output_gradients(const Architecture& arch, const Vector& theta, const Matrix& x);

/// Σ_n Σ_k output_cotangent(n, k) · ∂f_k(x_n)/∂θ.
Vector vector_jacobian_product(const Architecture& arch, const Vector& theta, const Matrix& x,
                               const Matrix& output_cotangent);

double log_prior(const Vector& theta, const PriorSpec& prior);
Vector grad_log_prior(const Vector& theta, const PriorSpec& prior);

/// Σ_n log N(y_n; f_θ(x_n), σ_o²) multiplied by `scale` (N/|batch| for
/// minibatches).
LogDensity log_likelihood(const Architecture& arch, const Vector& theta, const Dataset& data,
                          const LikelihoodSpec& lik, double scale = 1.0);

/// log_likelihood + log_prior.
LogDensity log_joint(const Architecture& arch, const Vector& theta, const Dataset& data,
                     const PriorSpec& prior, const LikelihoodSpec& lik, double scale = 1.0);

/// Gaussian log-likelihood of a residual matrix, shared by the training
/// objectives: value and ∂/∂log σ_o² of Σ log N(r; 0, σ²).
double gaussian_residual_loglik(const Matrix& residual, double log_noise_var,
                                double* grad_log_noise_var);

}  // namespace ibnn
