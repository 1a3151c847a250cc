#include "ibnn/model.hpp"

#include <cmath>
#include <numbers>

namespace ibnn {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeightMap = Eigen::Map<const RowMajorMatrix>;

ConstWeightMap weight_map(const Vector& theta, const LayerLayout& layer) {
  return ConstWeightMap(theta.data() + layer.weight_offset, layer.fan_out, layer.fan_in);
}

auto bias_segment(const Vector& theta, const LayerLayout& layer) {
  return theta.segment(layer.bias_offset, layer.fan_out);
}

void check_theta(const Architecture& arch, const Vector& theta) {
  if (theta.size() != arch.num_params()) {
    throw DimensionMismatch("parameter vector has length " + std::to_string(theta.size()) +
                            ", architecture expects " + std::to_string(arch.num_params()));
  }
}

void check_inputs(const Architecture& arch, const Matrix& x) {
  if (x.cols() != arch.input_dim) {
    throw DimensionMismatch("inputs have " + std::to_string(x.cols()) +
                            " columns, architecture expects " + std::to_string(arch.input_dim));
  }
}

Matrix apply_activation(Activation act, const Matrix& z) {
  if (act == Activation::Tanh) return z.array().tanh().matrix();
  return z.array().max(0.0).matrix();
}

Matrix activation_derivative(Activation act, const Matrix& z) {
  if (act == Activation::Tanh) {
    return (1.0 - z.array().tanh().square()).matrix();
  }
  return (z.array() > 0.0).cast<double>().matrix();
}

/// Activations feeding each layer (inputs[0] = x) and pre-activations of
/// each hidden layer.
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre_activations;
  Matrix output;
};

ForwardCache forward_cached(const Architecture& arch, const Vector& theta, const Matrix& x) {
  const auto layers = arch.layers();
  ForwardCache cache;
  cache.inputs.reserve(layers.size());
  cache.inputs.push_back(x);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix z = cache.inputs.back() * weight_map(theta, layers[l]).transpose();
    z.rowwise() += bias_segment(theta, layers[l]).transpose();
    if (l + 1 == layers.size()) {
      cache.output = std::move(z);
    } else {
      cache.inputs.push_back(apply_activation(arch.activation, z));
      cache.pre_activations.push_back(std::move(z));
    }
  }
  return cache;
}

Vector backprop(const Architecture& arch, const Vector& theta, const ForwardCache& cache,
                Matrix delta) {
  const auto layers = arch.layers();
  Vector grad(arch.num_params());
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    Eigen::Map<RowMajorMatrix>(grad.data() + layer.weight_offset, layer.fan_out, layer.fan_in) =
        delta.transpose() * cache.inputs[l];
    grad.segment(layer.bias_offset, layer.fan_out) = delta.colwise().sum().transpose();
    if (l > 0) {
      delta = (delta * weight_map(theta, layer)).cwiseProduct(
          activation_derivative(arch.activation, cache.pre_activations[l - 1]));
    }
  }
  return grad;
}

}  // namespace

std::string to_string(Activation act) { return act == Activation::Tanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw ConfigError("unknown activation '" + name + "' (expected tanh or relu)");
}

double activate(Activation act, double a) {
  return act == Activation::Tanh ? std::tanh(a) : (a > 0.0 ? a : 0.0);
}

double activate_derivative(Activation act, double a) {
  if (act == Activation::Tanh) {
    const double t = std::tanh(a);
    return 1.0 - t * t;
  }
  return a > 0.0 ? 1.0 : 0.0;
}

Architecture Architecture::mlp(Eigen::Index input_dim, std::vector<Eigen::Index> hidden,
                               Eigen::Index output_dim, Activation act) {
  Architecture arch{input_dim, std::move(hidden), output_dim, act};
  arch.validate();
  return arch;
}

void Architecture::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ConfigError("architecture widths must be >= 1");
  for (auto w : hidden_widths) {
    if (w < 1) throw ConfigError("hidden widths must be >= 1");
  }
}

std::vector<LayerLayout> Architecture::layers() const {
  std::vector<LayerLayout> out;
  Eigen::Index fan_in = input_dim;
  Eigen::Index offset = 0;
  auto push = [&](Eigen::Index fan_out) {
    LayerLayout layer{fan_in, fan_out, offset, offset + fan_in * fan_out};
    offset = layer.bias_offset + fan_out;
    fan_in = fan_out;
    out.push_back(layer);
  };
  for (auto w : hidden_widths) push(w);
  push(output_dim);
  return out;
}

Eigen::Index Architecture::num_params() const {
  Eigen::Index total = 0;
  Eigen::Index fan_in = input_dim;
  for (auto w : hidden_widths) {
    total += (fan_in + 1) * w;
    fan_in = w;
  }
  return total + (fan_in + 1) * output_dim;
}

std::vector<LayerParams> unflatten(const Architecture& arch, const Vector& theta) {
  check_theta(arch, theta);
  std::vector<LayerParams> out;
  for (const auto& layer : arch.layers()) {
    out.push_back({Matrix(weight_map(theta, layer)), Vector(bias_segment(theta, layer))});
  }
  return out;
}

Vector flatten(const Architecture& arch, const std::vector<LayerParams>& params) {
  const auto layers = arch.layers();
  if (params.size() != layers.size()) throw DimensionMismatch("flatten: wrong number of layers");
  Vector theta(arch.num_params());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (params[l].weight.rows() != layer.fan_out || params[l].weight.cols() != layer.fan_in ||
        params[l].bias.size() != layer.fan_out) {
      throw DimensionMismatch("flatten: layer " + std::to_string(l) + " has the wrong shape");
    }
    Eigen::Map<RowMajorMatrix>(theta.data() + layer.weight_offset, layer.fan_out, layer.fan_in) =
        params[l].weight;
    theta.segment(layer.bias_offset, layer.fan_out) = params[l].bias;
  }
  return theta;
}

PriorSpec PriorSpec::uniform(const Architecture& arch, double omega) {
  if (!(omega > 0.0)) throw ConfigError("prior scale omega must be positive");
  return {Vector::Constant(arch.num_params(), omega * omega)};
}

PriorSpec PriorSpec::fan_in_scaled(const Architecture& arch, double omega) {
  if (!(omega > 0.0)) throw ConfigError("prior scale omega must be positive");
  Vector var(arch.num_params());
  for (const auto& layer : arch.layers()) {
    var.segment(layer.weight_offset, layer.fan_in * layer.fan_out)
        .setConstant(omega * omega / static_cast<double>(layer.fan_in));
    var.segment(layer.bias_offset, layer.fan_out).setConstant(1.0);
  }
  return {var};
}

double LikelihoodSpec::noise_var() const { return std::exp(log_noise_var); }

Vector forward(const Architecture& arch, const Vector& theta, const Vector& x) {
  check_theta(arch, theta);
  if (x.size() != arch.input_dim) {
    throw DimensionMismatch("input has length " + std::to_string(x.size()) +
                            ", architecture expects " + std::to_string(arch.input_dim));
  }
  const auto layers = arch.layers();
  Vector h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const bool last = l + 1 == layers.size();
    Vector next(layer.fan_out);
    for (Eigen::Index j = 0; j < layer.fan_out; ++j) {
      double acc = theta[layer.bias_offset + j];
      const double* row = theta.data() + layer.weight_offset + j * layer.fan_in;
      for (Eigen::Index i = 0; i < layer.fan_in; ++i) acc += row[i] * h[i];
      next[j] = last ? acc : activate(arch.activation, acc);
    }
    h = std::move(next);
  }
  return h;
}

Matrix forward_batch(const Architecture& arch, const Vector& theta, const Matrix& x) {
  check_theta(arch, theta);
  check_inputs(arch, x);
  return forward_cached(arch, theta, x).output;
}

Vector vector_jacobian_product(const Architecture& arch, const Vector& theta, const Matrix& x,
                               const Matrix& output_cotangent) {
  check_theta(arch, theta);
  check_inputs(arch, x);
  if (output_cotangent.rows() != x.rows() || output_cotangent.cols() != arch.output_dim) {
    throw DimensionMismatch("vector_jacobian_product: cotangent shape mismatch");
  }
  return backprop(arch, theta, forward_cached(arch, theta, x), output_cotangent);
}

Matrix output_gradients(const Architecture& arch, const Vector& theta, const Matrix& x) {
  check_theta(arch, theta);
  check_inputs(arch, x);
  if (arch.output_dim != 1) {
    throw ArchitectureUnsupported("output_gradients requires a single output");
  }
  const auto layers = arch.layers();
  const ForwardCache cache = forward_cached(arch, theta, x);
  Matrix jac(x.rows(), arch.num_params());
  Matrix delta = Matrix::Ones(x.rows(), 1);
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    const Matrix& input = cache.inputs[l];
    for (Eigen::Index j = 0; j < layer.fan_out; ++j) {
      for (Eigen::Index i = 0; i < layer.fan_in; ++i) {
        jac.col(layer.weight_offset + j * layer.fan_in + i) =
            delta.col(j).cwiseProduct(input.col(i));
      }
      jac.col(layer.bias_offset + j) = delta.col(j);
    }
    if (l > 0) {
      delta = (delta * weight_map(theta, layer)).cwiseProduct(
          activation_derivative(arch.activation, cache.pre_activations[l - 1]));
    }
  }
  return jac;
}

Matrix param_gradient(const Architecture& arch, const Vector& theta, const Vector& x) {
  Matrix jac(arch.output_dim, arch.num_params());
  const Matrix row = x.transpose();
  for (Eigen::Index k = 0; k < arch.output_dim; ++k) {
    Matrix seed = Matrix::Zero(1, arch.output_dim);
    seed(0, k) = 1.0;
    jac.row(k) = vector_jacobian_product(arch, theta, row, seed).transpose();
  }
  return jac;
}

double log_prior(const Vector& theta, const PriorSpec& prior) {
  if (theta.size() != prior.variances.size()) {
    throw DimensionMismatch("log_prior: parameter and prior lengths differ");
  }
  const double log2pi = std::log(2.0 * std::numbers::pi);
  return -0.5 * (static_cast<double>(theta.size()) * log2pi +
                 prior.variances.array().log().sum() +
                 (theta.array().square() / prior.variances.array()).sum());
}

Vector grad_log_prior(const Vector& theta, const PriorSpec& prior) {
  if (theta.size() != prior.variances.size()) {
    throw DimensionMismatch("grad_log_prior: parameter and prior lengths differ");
  }
  return -(theta.array() / prior.variances.array()).matrix();
}

double gaussian_residual_loglik(const Matrix& residual, double log_noise_var,
                                double* grad_log_noise_var) {
  const double n = static_cast<double>(residual.size());
  const double sq = residual.squaredNorm();
  const double inv_var = std::exp(-log_noise_var);
  if (grad_log_noise_var) *grad_log_noise_var = -0.5 * n + 0.5 * sq * inv_var;
  return -0.5 * n * (std::log(2.0 * std::numbers::pi) + log_noise_var) - 0.5 * sq * inv_var;
}

LogDensity log_likelihood(const Architecture& arch, const Vector& theta, const Dataset& data,
                          const LikelihoodSpec& lik, double scale) {
  check_theta(arch, theta);
  if (data.size() == 0) throw DimensionMismatch("log_likelihood: empty dataset");
  if (data.y.cols() != arch.output_dim || data.y.rows() != data.x.rows()) {
    throw DimensionMismatch("log_likelihood: target shape does not match architecture");
  }
  check_inputs(arch, data.x);
  const ForwardCache cache = forward_cached(arch, theta, data.x);
  const Matrix residual = data.y - cache.output;
  LogDensity out;
  out.value = scale * gaussian_residual_loglik(residual, lik.log_noise_var, &out.grad_log_noise_var);
  out.grad_log_noise_var *= scale;
  out.grad = backprop(arch, theta, cache, residual * (scale / lik.noise_var()));
  return out;
}

LogDensity log_joint(const Architecture& arch, const Vector& theta, const Dataset& data,
                     const PriorSpec& prior, const LikelihoodSpec& lik, double scale) {
  LogDensity out = log_likelihood(arch, theta, data, lik, scale);
  out.value += log_prior(theta, prior);
  out.grad += grad_log_prior(theta, prior);
  return out;
}

}  // namespace ibnn
