#include "ibnn/vi.hpp"

#include <cmath>
#include <sstream>

namespace ibnn {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajorMatrix> weights_of(const Vector& v, const LayerLayout& layer) {
  return {v.data() + layer.weight_offset, layer.fan_out, layer.fan_in};
}

Matrix layer_activation(Activation act, const Matrix& z) {
  if (act == Activation::Tanh) return z.array().tanh().matrix();
  return z.array().max(0.0).matrix();
}

Matrix layer_activation_derivative(Activation act, const Matrix& z) {
  if (act == Activation::Tanh) return (1.0 - z.array().tanh().square()).matrix();
  return (z.array() > 0.0).cast<double>().matrix();
}

void check_posterior(const Architecture& arch, const Vector& mean) {
  if (mean.size() != arch.num_params()) {
    throw DimensionMismatch("posterior has " + std::to_string(mean.size()) +
                            " parameters, architecture expects " +
                            std::to_string(arch.num_params()));
  }
}

void check_prior(const Vector& mean, const PriorSpec& prior) {
  if (prior.variances.size() != mean.size()) {
    throw DimensionMismatch("prior has " + std::to_string(prior.variances.size()) +
                            " variances, posterior has " + std::to_string(mean.size()));
  }
}

/// Local-reparameterisation pass for one Monte Carlo sample.
struct LocalPass {
  std::vector<Matrix> inputs;       // activations feeding each layer
  std::vector<Matrix> noise;        // ε per layer, N x fan_out
  std::vector<Matrix> stddev;       // sqrt of induced variance per layer
  std::vector<Matrix> pre_activations;
  Matrix output;
};

LocalPass local_forward(const Architecture& arch, const Vector& mean, const Vector& var,
                        const Matrix& x, Rng& rng) {
  const auto layers = arch.layers();
  LocalPass pass;
  pass.inputs.push_back(x);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const Matrix& a = pass.inputs.back();
    Matrix mu = a * weights_of(mean, layer).transpose();
    mu.rowwise() += mean.segment(layer.bias_offset, layer.fan_out).transpose();
    Matrix s2 = a.array().square().matrix() * weights_of(var, layer).transpose();
    s2.rowwise() += var.segment(layer.bias_offset, layer.fan_out).transpose();
    Matrix sd = s2.array().sqrt().matrix();
    Matrix eps(a.rows(), layer.fan_out);
    rng.fill_normal(eps);
    Matrix z = mu + eps.cwiseProduct(sd);
    pass.noise.push_back(std::move(eps));
    pass.stddev.push_back(std::move(sd));
    if (l + 1 == layers.size()) {
      pass.output = std::move(z);
    } else {
      pass.inputs.push_back(layer_activation(arch.activation, z));
      pass.pre_activations.push_back(std::move(z));
    }
  }
  return pass;
}

/// Accumulates ∂/∂mean and ∂/∂var of Σ cotangent ⊙ output for one local pass.
void local_backward(const Architecture& arch, const Vector& mean, const Vector& var,
                    const LocalPass& pass, Matrix delta, Vector& grad_mean, Vector& grad_var) {
  const auto layers = arch.layers();
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    const Matrix& a = pass.inputs[l];
    const Matrix dvar = delta.cwiseProduct(pass.noise[l]).cwiseQuotient(2.0 * pass.stddev[l]);
    Eigen::Map<RowMajorMatrix>(grad_mean.data() + layer.weight_offset, layer.fan_out,
                               layer.fan_in) += delta.transpose() * a;
    grad_mean.segment(layer.bias_offset, layer.fan_out) += delta.colwise().sum().transpose();
    Eigen::Map<RowMajorMatrix>(grad_var.data() + layer.weight_offset, layer.fan_out,
                               layer.fan_in) += dvar.transpose() * a.array().square().matrix();
    grad_var.segment(layer.bias_offset, layer.fan_out) += dvar.colwise().sum().transpose();
    if (l > 0) {
      Matrix da = delta * weights_of(mean, layer) +
                  (dvar * weights_of(var, layer)).cwiseProduct(2.0 * a);
      delta = da.cwiseProduct(
          layer_activation_derivative(arch.activation, pass.pre_activations[l - 1]));
    }
  }
}

bool all_finite(const ElboEstimate& e) {
  return std::isfinite(e.value) && e.grad_mean.allFinite() && e.grad_scale.allFinite() &&
         std::isfinite(e.grad_log_noise_var);
}

[[noreturn]] void throw_non_finite(std::size_t step, const Vector& params) {
  std::ostringstream msg;
  msg << "non-finite ELBO at iteration " << step << " (parameter norm " << params.norm() << ")";
  throw NonFiniteLoss(msg.str());
}

}  // namespace

Matrix FullCovPosterior::scale() const {
  Matrix lower = scale_param.triangularView<Eigen::StrictlyLower>();
  lower.diagonal() = scale_param.diagonal().array().exp().matrix();
  return lower;
}

Matrix FullCovPosterior::covariance() const {
  const Matrix l = scale();
  return l * l.transpose();
}

FullCovPosterior FullCovPosterior::from_scale(Vector mean, const Matrix& lower) {
  if (lower.rows() != mean.size() || lower.cols() != mean.size()) {
    throw DimensionMismatch("from_scale: scale shape does not match mean");
  }
  if ((lower.diagonal().array() <= 0.0).any()) {
    throw ConfigError("from_scale: scale diagonal must be positive");
  }
  Matrix param = lower.triangularView<Eigen::StrictlyLower>();
  param.diagonal() = lower.diagonal().array().log().matrix();
  return {std::move(mean), std::move(param)};
}

Adam::Adam(Eigen::Index size, double learning_rate)
    : learning_rate_(learning_rate),
      first_moment_(Vector::Zero(size)),
      second_moment_(Vector::Zero(size)) {}

void Adam::step(Vector& params, const Vector& grad) {
  if (grad.size() != first_moment_.size() || params.size() != grad.size()) {
    throw DimensionMismatch("Adam::step: size mismatch");
  }
  ++step_count_;
  first_moment_ = kBeta1 * first_moment_ + (1.0 - kBeta1) * grad;
  second_moment_ = kBeta2 * second_moment_ + (1.0 - kBeta2) * grad.cwiseAbs2();
  const double t = static_cast<double>(step_count_);
  const double c1 = 1.0 - std::pow(kBeta1, t);
  const double c2 = 1.0 - std::pow(kBeta2, t);
  params.array() -= learning_rate_ * (first_moment_.array() / c1) /
                    ((second_moment_.array() / c2).sqrt() + kEpsilon);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 0) throw ConfigError("batch size must be non-negative (0 = full batch)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (mc_samples < 1) throw ConfigError("Monte Carlo sample count must be positive");
  if (!(init_variance > 0.0)) throw ConfigError("initial variance must be positive");
}

int TrainConfig::steps_per_epoch(Eigen::Index n) const {
  if (batch_size == 0) return 1;
  return static_cast<int>((n + batch_size - 1) / batch_size);
}

std::vector<std::size_t> sample_minibatch(Eigen::Index n, int batch_size, Rng& rng) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(batch_size));
  for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
  return idx;
}

Vector sample_posterior(const MeanFieldPosterior& q, Rng& rng) {
  const Vector z = rng.normal_vector(q.mean.size());
  return q.mean + (0.5 * q.log_var.array()).exp().matrix().cwiseProduct(z);
}

Vector sample_posterior(const FullCovPosterior& q, Rng& rng) {
  const Vector z = rng.normal_vector(q.mean.size());
  return q.mean + q.scale().triangularView<Eigen::Lower>() * z;
}

Vector sample_posterior(const VariationalPosterior& q, Rng& rng) {
  return std::visit([&](const auto& post) { return sample_posterior(post, rng); }, q);
}

double kl_meanfield_to_diag_prior(const MeanFieldPosterior& q, const PriorSpec& prior) {
  check_prior(q.mean, prior);
  if (q.log_var.size() != q.mean.size()) throw DimensionMismatch("kl: log_var length");
  const auto s2 = prior.variances.array();
  const auto v = q.log_var.array().exp();
  return 0.5 * (v / s2 + q.mean.array().square() / s2 - 1.0 + s2.log() - q.log_var.array()).sum();
}

double kl_fullcov_to_diag_prior(const FullCovPosterior& q, const PriorSpec& prior) {
  check_prior(q.mean, prior);
  const Eigen::Index p = q.mean.size();
  if (q.scale_param.rows() != p || q.scale_param.cols() != p) {
    throw DimensionMismatch("kl: scale shape does not match mean");
  }
  const Matrix l = q.scale();
  const auto s2 = prior.variances.array();
  const double trace = (l.array().square().colwise() / s2).sum();
  const double quad = (q.mean.array().square() / s2).sum();
  return 0.5 * (trace + quad - static_cast<double>(p) + s2.log().sum() -
                2.0 * q.scale_param.diagonal().sum());
}

ElboEstimate elbo_estimate_with_noise(const Architecture& arch, const MeanFieldPosterior& q,
                                      const Dataset& data, const PriorSpec& prior,
                                      const LikelihoodSpec& lik, const Matrix& noise,
                                      double lik_scale) {
  check_posterior(arch, q.mean);
  if (noise.rows() != q.mean.size() || noise.cols() < 1) {
    throw DimensionMismatch("elbo_estimate: noise must be P x M with M >= 1");
  }
  const Eigen::Index p = q.mean.size();
  const double m = static_cast<double>(noise.cols());
  const Vector sd = (0.5 * q.log_var.array()).exp().matrix();
  ElboEstimate out;
  out.grad_mean = Vector::Zero(p);
  out.grad_scale = Vector::Zero(p);
  for (Eigen::Index s = 0; s < noise.cols(); ++s) {
    const Vector theta = q.mean + sd.cwiseProduct(noise.col(s));
    const LogDensity ll = log_likelihood(arch, theta, data, lik, lik_scale / m);
    out.expected_loglik += ll.value;
    out.grad_mean += ll.grad;
    out.grad_scale += 0.5 * ll.grad.cwiseProduct(noise.col(s)).cwiseProduct(sd);
    out.grad_log_noise_var += ll.grad_log_noise_var;
  }
  out.kl = kl_meanfield_to_diag_prior(q, prior);
  out.value = out.expected_loglik - out.kl;
  const Vector var = q.variance();
  out.grad_mean -= q.mean.cwiseQuotient(prior.variances);
  out.grad_scale -= 0.5 * (var.cwiseQuotient(prior.variances).array() - 1.0).matrix();
  return out;
}

ElboEstimate elbo_estimate_with_noise(const Architecture& arch, const FullCovPosterior& q,
                                      const Dataset& data, const PriorSpec& prior,
                                      const LikelihoodSpec& lik, const Matrix& noise,
                                      double lik_scale) {
  check_posterior(arch, q.mean);
  if (noise.rows() != q.mean.size() || noise.cols() < 1) {
    throw DimensionMismatch("elbo_estimate: noise must be P x M with M >= 1");
  }
  const Eigen::Index p = q.mean.size();
  const double m = static_cast<double>(noise.cols());
  const Matrix l = q.scale();
  const Matrix thetas = (l.triangularView<Eigen::Lower>() * noise).colwise() + q.mean;
  ElboEstimate out;
  out.grad_mean = Vector::Zero(p);
  Matrix grads(p, noise.cols());
  for (Eigen::Index s = 0; s < noise.cols(); ++s) {
    const LogDensity ll = log_likelihood(arch, thetas.col(s), data, lik, lik_scale / m);
    out.expected_loglik += ll.value;
    grads.col(s) = ll.grad;
    out.grad_log_noise_var += ll.grad_log_noise_var;
  }
  out.grad_mean = grads.rowwise().sum();
  // ∂/∂L = Σ_m g_m z_mᵀ restricted to the lower triangle.
  Matrix grad_l = grads * noise.transpose();
  grad_l = grad_l.triangularView<Eigen::Lower>();
  grad_l.diagonal() = grad_l.diagonal().cwiseProduct(l.diagonal());

  out.kl = kl_fullcov_to_diag_prior(q, prior);
  out.value = out.expected_loglik - out.kl;
  out.grad_mean -= q.mean.cwiseQuotient(prior.variances);
  Matrix kl_grad = l.array().colwise() / prior.variances.array();
  kl_grad = kl_grad.triangularView<Eigen::Lower>();
  kl_grad.diagonal() =
      (l.diagonal().array().square() / prior.variances.array() - 1.0).matrix();
  grad_l -= kl_grad;
  const auto packed = pack_lower(grad_l);
  out.grad_scale = Eigen::Map<const Vector>(packed.data(), static_cast<Eigen::Index>(packed.size()));
  return out;
}

ElboEstimate elbo_estimate(const Architecture& arch, const VariationalPosterior& q,
                           const Dataset& data, const PriorSpec& prior,
                           const LikelihoodSpec& lik, int samples, Rng& rng,
                           double lik_scale) {
  if (samples < 1) throw ConfigError("elbo_estimate: need at least one sample");
  return std::visit(
      [&](const auto& post) {
        Matrix noise(post.mean.size(), samples);
        rng.fill_normal(noise);
        return elbo_estimate_with_noise(arch, post, data, prior, lik, noise, lik_scale);
      },
      q);
}

ElboEstimate elbo_estimate_local(const Architecture& arch, const MeanFieldPosterior& q,
                                 const Dataset& data, const PriorSpec& prior,
                                 const LikelihoodSpec& lik, int samples, Rng& rng,
                                 double lik_scale) {
  check_posterior(arch, q.mean);
  if (samples < 1) throw ConfigError("elbo_estimate_local: need at least one sample");
  if (data.y.cols() != arch.output_dim) throw DimensionMismatch("elbo: target width");
  const Eigen::Index p = q.mean.size();
  const Vector var = q.variance();
  const double scale = lik_scale / static_cast<double>(samples);
  const double inv_noise = 1.0 / lik.noise_var();
  ElboEstimate out;
  out.grad_mean = Vector::Zero(p);
  Vector grad_var = Vector::Zero(p);
  for (int s = 0; s < samples; ++s) {
    const LocalPass pass = local_forward(arch, q.mean, var, data.x, rng);
    const Matrix residual = data.y - pass.output;
    double g_noise = 0.0;
    out.expected_loglik += scale * gaussian_residual_loglik(residual, lik.log_noise_var, &g_noise);
    out.grad_log_noise_var += scale * g_noise;
    local_backward(arch, q.mean, var, pass, residual * (scale * inv_noise), out.grad_mean, grad_var);
  }
  out.kl = kl_meanfield_to_diag_prior(q, prior);
  out.value = out.expected_loglik - out.kl;
  out.grad_mean -= q.mean.cwiseQuotient(prior.variances);
  out.grad_scale = grad_var.cwiseProduct(var) -
                   0.5 * (var.cwiseQuotient(prior.variances).array() - 1.0).matrix();
  return out;
}

Matrix local_reparam_forward(const Architecture& arch, const VariationalPosterior& q,
                             const Matrix& x, Rng& rng) {
  const auto* mf = std::get_if<MeanFieldPosterior>(&q);
  if (!mf) {
    throw UnsupportedPosterior("local reparameterisation requires a mean-field posterior");
  }
  check_posterior(arch, mf->mean);
  if (x.cols() != arch.input_dim) throw DimensionMismatch("local_reparam_forward: input width");
  return local_forward(arch, mf->mean, mf->variance(), x, rng).output;
}

MeanFieldPosterior init_meanfield(const Architecture& arch, double init_variance, Rng& rng) {
  MeanFieldPosterior q{Vector::Zero(arch.num_params()),
                       Vector::Constant(arch.num_params(), std::log(init_variance))};
  for (const auto& layer : arch.layers()) {
    const double sd = std::pow(4.0 * static_cast<double>(layer.fan_out), -0.25);
    for (Eigen::Index i = 0; i < layer.fan_in * layer.fan_out; ++i) {
      q.mean[layer.weight_offset + i] = sd * rng.normal();
    }
  }
  return q;
}

FullCovPosterior init_fullcov(const Architecture& arch, double init_log_scale, Rng& rng) {
  const Eigen::Index p = arch.num_params();
  FullCovPosterior q;
  q.mean = std::sqrt(0.1) * rng.normal_vector(p);
  q.scale_param = Matrix::Zero(p, p);
  q.scale_param.diagonal().setConstant(init_log_scale);
  return q;
}

namespace {

/// Shared Adam loop; `pack`/`unpack` convert between posterior and flat parameters.
template <typename Posterior, typename Pack, typename Unpack, typename Estimate>
VIResult<Posterior> run_vi(const Architecture& arch, const Dataset& data, const PriorSpec& prior,
                           const LikelihoodSpec& lik0, const TrainConfig& config, Posterior q,
                           Pack pack, Unpack unpack, Estimate estimate,
                           const VIObserver<Posterior>& observer) {
  config.validate();
  if (data.size() == 0) throw DimensionMismatch("training set is empty");
  check_posterior(arch, q.mean);
  check_prior(q.mean, prior);

  Rng batch_rng = Rng(config.seed).split(2);
  Rng noise_rng = Rng(config.seed).split(3);
  auto eval_elbo = [&](const Posterior& post, const LikelihoodSpec& lik) {
    Rng eval_rng = Rng(config.seed).split(4);
    return elbo_estimate(arch, VariationalPosterior(post), data, prior, lik,
                         std::max(config.mc_samples, 32), eval_rng)
        .value;
  };

  VIResult<Posterior> result;
  result.lik = lik0;
  result.initial_elbo = eval_elbo(q, lik0);

  Vector params = pack(q);
  const Eigen::Index core = params.size();
  if (lik0.trainable) {
    params.conservativeResize(core + 1);
    params[core] = lik0.log_noise_var;
  }
  Adam adam(params.size(), config.learning_rate);
  const int steps = config.steps_per_epoch(data.size());
  const bool full_batch = config.batch_size == 0;
  std::size_t step = 0;
  LikelihoodSpec lik = lik0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int s = 0; s < steps; ++s) {
      ElboEstimate est;
      if (full_batch) {
        est = estimate(q, data, lik, noise_rng, 1.0);
      } else {
        const Dataset batch = data.subset(sample_minibatch(data.size(), config.batch_size, batch_rng));
        est = estimate(q, batch, lik, noise_rng,
                       static_cast<double>(data.size()) / config.batch_size);
      }
      if (!all_finite(est)) throw_non_finite(step, params);
      Vector grad(params.size());
      grad.head(q.mean.size()) = -est.grad_mean;
      grad.segment(q.mean.size(), est.grad_scale.size()) = -est.grad_scale;
      if (lik.trainable) grad[core] = -est.grad_log_noise_var;
      adam.step(params, grad);
      if (!params.allFinite()) throw_non_finite(step, params);
      q = unpack(params.head(core));
      if (lik.trainable) lik.log_noise_var = params[core];
      ++step;
      if (observer) observer(step, q, lik);
    }
  }
  result.q = std::move(q);
  result.lik = lik;
  result.steps = step;
  result.final_elbo = eval_elbo(result.q, lik);
  return result;
}

}  // namespace

MfviResult train_mfvi_from(const Architecture& arch, const Dataset& data, const PriorSpec& prior,
                           const LikelihoodSpec& lik, const TrainConfig& config,
                           MeanFieldPosterior q0,
                           const VIObserver<MeanFieldPosterior>& observer) {
  const Eigen::Index p = arch.num_params();
  auto pack = [p](const MeanFieldPosterior& q) {
    Vector v(2 * p);
    v << q.mean, q.log_var;
    return v;
  };
  auto unpack = [p](const Vector& v) {
    return MeanFieldPosterior{v.head(p), v.segment(p, p)};
  };
  auto estimate = [&](const MeanFieldPosterior& q, const Dataset& batch,
                      const LikelihoodSpec& lik_now, Rng& rng, double scale) {
    if (config.local_reparameterisation) {
      return elbo_estimate_local(arch, q, batch, prior, lik_now, config.mc_samples, rng, scale);
    }
    return elbo_estimate(arch, VariationalPosterior(q), batch, prior, lik_now, config.mc_samples,
                         rng, scale);
  };
  return run_vi<MeanFieldPosterior>(arch, data, prior, lik, config, std::move(q0), pack, unpack,
                                    estimate, observer);
}

MfviResult train_mfvi(const Architecture& arch, const Dataset& data, const PriorSpec& prior,
                      const LikelihoodSpec& lik, const TrainConfig& config,
                      const VIObserver<MeanFieldPosterior>& observer) {
  config.validate();
  Rng init_rng = Rng(config.seed).split(1);
  return train_mfvi_from(arch, data, prior, lik, config,
                         init_meanfield(arch, config.init_variance, init_rng), observer);
}

FcviResult train_fcvi_from(const Architecture& arch, const Dataset& data, const PriorSpec& prior,
                           const LikelihoodSpec& lik, const TrainConfig& config,
                           FullCovPosterior q0,
                           const VIObserver<FullCovPosterior>& observer) {
  const Eigen::Index p = arch.num_params();
  auto pack = [p](const FullCovPosterior& q) {
    const auto packed = pack_lower(q.scale_param);
    Vector v(p + static_cast<Eigen::Index>(packed.size()));
    v.head(p) = q.mean;
    v.tail(packed.size()) =
        Eigen::Map<const Vector>(packed.data(), static_cast<Eigen::Index>(packed.size()));
    return v;
  };
  auto unpack = [p](const Vector& v) {
    const Vector tail = v.tail(v.size() - p);
    return FullCovPosterior{v.head(p), unpack_lower({tail.data(), static_cast<std::size_t>(tail.size())}, p)};
  };
  auto estimate = [&](const FullCovPosterior& q, const Dataset& batch,
                      const LikelihoodSpec& lik_now, Rng& rng, double scale) {
    return elbo_estimate(arch, VariationalPosterior(q), batch, prior, lik_now, config.mc_samples,
                         rng, scale);
  };
  return run_vi<FullCovPosterior>(arch, data, prior, lik, config, std::move(q0), pack, unpack,
                                  estimate, observer);
}

FcviResult train_fcvi(const Architecture& arch, const Dataset& data, const PriorSpec& prior,
                      const LikelihoodSpec& lik, const TrainConfig& config,
                      const VIObserver<FullCovPosterior>& observer) {
  config.validate();
  Rng init_rng = Rng(config.seed).split(1);
  return train_fcvi_from(arch, data, prior, lik, config,
                         init_fullcov(arch, config.init_log_scale, init_rng), observer);
}

}  // namespace ibnn
