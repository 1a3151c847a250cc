#include "ibnn/laplace.hpp"

#include <cmath>
#include <sstream>

namespace ibnn {

namespace {

constexpr Eigen::Index kGaussNewtonChunk = 512;

void require_single_output(const Architecture& arch, const char* what) {
  if (arch.output_dim != 1) {
    throw ArchitectureUnsupported(std::string(what) + " supports single-output networks only");
  }
}

}  // namespace

Vector init_map_params(const Architecture& arch, Rng& rng) {
  return init_meanfield(arch, 1.0, rng).mean;
}

MapResult train_map_from(const Architecture& arch, const Dataset& data, const PriorSpec& prior,
                         const LikelihoodSpec& lik0, const TrainConfig& config, Vector theta,
                         const MapObserver& observer) {
  config.validate();
  if (data.size() == 0) throw DimensionMismatch("training set is empty");
  if (theta.size() != arch.num_params()) throw DimensionMismatch("train_map: initial point size");
  if (prior.variances.size() != theta.size()) throw DimensionMismatch("train_map: prior size");

  Rng batch_rng = Rng(config.seed).split(2);
  MapResult result;
  result.initial_log_joint = log_joint(arch, theta, data, prior, lik0).value;

  const Eigen::Index p = theta.size();
  Vector params = theta;
  if (lik0.trainable) {
    params.conservativeResize(p + 1);
    params[p] = lik0.log_noise_var;
  }
  LikelihoodSpec lik = lik0;
  Adam adam(params.size(), config.learning_rate);
  const int steps = config.steps_per_epoch(data.size());
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int s = 0; s < steps; ++s) {
      LogDensity lj;
      if (config.batch_size == 0) {
        lj = log_joint(arch, theta, data, prior, lik);
      } else {
        const Dataset batch =
            data.subset(sample_minibatch(data.size(), config.batch_size, batch_rng));
        lj = log_joint(arch, theta, batch, prior, lik,
                       static_cast<double>(data.size()) / config.batch_size);
      }
      if (!std::isfinite(lj.value) || !lj.grad.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite log joint at iteration " << step << " (parameter norm "
            << params.norm() << ")";
        throw NonFiniteLoss(msg.str());
      }
      Vector grad(params.size());
      grad.head(p) = -lj.grad;
      if (lik.trainable) grad[p] = -lj.grad_log_noise_var;
      adam.step(params, grad);
      theta = params.head(p);
      if (lik.trainable) lik.log_noise_var = params[p];
      ++step;
      if (observer) observer(step, theta, lik);
    }
  }
  result.theta = std::move(theta);
  result.lik = lik;
  result.steps = step;
  result.final_log_joint = log_joint(arch, result.theta, data, prior, lik).value;
  if (!std::isfinite(result.final_log_joint)) {
    throw NonFiniteLoss("non-finite log joint after training");
  }
  return result;
}

MapResult train_map(const Architecture& arch, const Dataset& data, const PriorSpec& prior,
                    const LikelihoodSpec& lik, const TrainConfig& config,
                    const MapObserver& observer) {
  config.validate();
  Rng init_rng = Rng(config.seed).split(1);
  return train_map_from(arch, data, prior, lik, config, init_map_params(arch, init_rng),
                        observer);
}

LaplacePosterior laplace_from_precision(Vector theta_map, Matrix precision, double noise_var,
                                        const JitterPolicy& jitter) {
  if (precision.rows() != theta_map.size() || precision.cols() != theta_map.size()) {
    throw DimensionMismatch("laplace: precision shape does not match parameter count");
  }
  LaplacePosterior post;
  post.precision_chol = cholesky(precision, jitter);
  post.theta_map = std::move(theta_map);
  post.precision = std::move(precision);
  post.noise_var = noise_var;
  return post;
}

LaplacePosterior gauss_newton_precision(const Architecture& arch, const Vector& theta_map,
                                        const Dataset& data, const PriorSpec& prior,
                                        double noise_var, const JitterPolicy& jitter) {
  require_single_output(arch, "gauss_newton_precision");
  if (data.size() == 0) throw DimensionMismatch("gauss_newton_precision: empty dataset");
  if (prior.variances.size() != arch.num_params()) {
    throw DimensionMismatch("gauss_newton_precision: prior size");
  }
  if (!(noise_var > 0.0)) throw ConfigError("gauss_newton_precision: noise variance must be positive");
  const Eigen::Index p = arch.num_params();
  Matrix precision = Matrix::Zero(p, p);
  for (Eigen::Index start = 0; start < data.size(); start += kGaussNewtonChunk) {
    const Eigen::Index rows = std::min(kGaussNewtonChunk, data.size() - start);
    const Matrix jac = output_gradients(arch, theta_map, data.x.middleRows(start, rows));
    precision.selfadjointView<Eigen::Lower>().rankUpdate(jac.transpose(), 1.0 / noise_var);
  }
  precision.diagonal() += prior.precision();
  precision = precision.selfadjointView<Eigen::Lower>();
  return laplace_from_precision(theta_map, std::move(precision), noise_var, jitter);
}

Vector laplace_sample_with_noise(const LaplacePosterior& post, const Vector& z) {
  return post.theta_map + post.precision_chol.solve_upper(z);
}

Vector laplace_sample(const LaplacePosterior& post, Rng& rng) {
  return laplace_sample_with_noise(post, rng.normal_vector(post.theta_map.size()));
}

GaussianPredictive linearised_predictive(const LaplacePosterior& post, const Architecture& arch,
                                         const Vector& x) {
  require_single_output(arch, "linearised_predictive");
  if (x.size() != arch.input_dim) throw DimensionMismatch("linearised_predictive: input width");
  const Matrix row = x.transpose();
  return linearised_predictive_batch(post, arch, row).front();
}

std::vector<GaussianPredictive> linearised_predictive_batch(const LaplacePosterior& post,
                                                            const Architecture& arch,
                                                            const Matrix& x) {
  require_single_output(arch, "linearised_predictive");
  const Matrix mean = forward_batch(arch, post.theta_map, x);
  const Matrix jac = output_gradients(arch, post.theta_map, x);
  const Matrix v =
      post.precision_chol.lower().triangularView<Eigen::Lower>().solve(jac.transpose());
  const Vector fvar = v.colwise().squaredNorm().transpose();
  std::vector<GaussianPredictive> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    out[static_cast<std::size_t>(n)] = {mean(n, 0), post.noise_var + fvar[n]};
  }
  return out;
}

}  // namespace ibnn
