#include "ibnn/runner.hpp"

#include <algorithm>
#include <cmath>

namespace ibnn {

namespace {

constexpr std::pair<Method, const char*> kMethodNames[] = {
    {Method::Map, "map"},
    {Method::Mfvi, "mfvi"},
    {Method::Fcvi, "fcvi"},
    {Method::LaplaceSampled, "laplace-sampled"},
    {Method::LaplaceLinearised, "laplace-linearised"},
    {Method::Hmc, "hmc"},
    {Method::Blr, "blr"},
};

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Evaluation mixture_evaluation(const Matrix& outputs, const Vector& y, double noise_var) {
  const FunctionBand band = band_from_outputs(outputs);
  Evaluation ev{Vector(y.size()), band.mean, band.std};
  for (Eigen::Index n = 0; n < y.size(); ++n) {
    ev.log_lik[n] = test_ll_mixture({outputs.col(n), noise_var}, y[n]);
  }
  return ev;
}

Evaluation gaussian_evaluation(const std::vector<GaussianPredictive>& preds, const Vector& y,
                               double noise_var) {
  Evaluation ev{Vector(y.size()), Vector(y.size()), Vector(y.size())};
  for (Eigen::Index n = 0; n < y.size(); ++n) {
    const auto& p = preds[static_cast<std::size_t>(n)];
    ev.log_lik[n] = test_ll_gaussian(p, y[n]);
    ev.mean[n] = p.mean;
    ev.function_std[n] = std::sqrt(std::max(p.variance - noise_var, 0.0));
  }
  return ev;
}

}  // namespace

std::string to_string(Method method) {
  for (const auto& [m, name] : kMethodNames) {
    if (m == method) return name;
  }
  throw ConfigError("unknown method");
}

Method method_from_string(const std::string& name) {
  for (const auto& [m, n] : kMethodNames) {
    if (name == n) return m;
  }
  throw ConfigError("unknown method '" + name +
                    "' (expected map, mfvi, fcvi, laplace-sampled, laplace-linearised, hmc or blr)");
}

PriorSpec MethodSettings::prior() const {
  if (prior_kind == "uniform") return PriorSpec::uniform(arch, omega);
  if (prior_kind == "fan_in") return PriorSpec::fan_in_scaled(arch, omega);
  throw ConfigError("unknown prior '" + prior_kind + "' (expected uniform or fan_in)");
}

nlohmann::json MethodSettings::to_json() const {
  nlohmann::json j = {{"method", to_string(method)},
                      {"input_dim", arch.input_dim},
                      {"hidden", arch.hidden_widths},
                      {"activation", to_string(arch.activation)},
                      {"prior", prior_kind},
                      {"omega", omega},
                      {"epochs", train.epochs},
                      {"batch_size", train.batch_size},
                      {"learning_rate", train.learning_rate},
                      {"mc_samples", train.mc_samples},
                      {"init_variance", train.init_variance},
                      {"init_log_scale", train.init_log_scale},
                      {"local_reparameterisation", train.local_reparameterisation},
                      {"log_noise_var", lik.log_noise_var},
                      {"trainable_noise", lik.trainable},
                      {"eval_samples", eval_samples}};
  if (method == Method::Hmc) {
    j["hmc"] = {{"min_leapfrog_steps", hmc.min_leapfrog_steps},
                {"max_leapfrog_steps", hmc.max_leapfrog_steps},
                {"min_step_size", hmc.min_step_size},
                {"max_step_size", hmc.max_step_size},
                {"burn_in", hmc.burn_in},
                {"n_samples", hmc.n_samples},
                {"kept_samples", hmc.kept_samples}};
  }
  return j;
}

MethodSettings MethodSettings::from_json(const nlohmann::json& j, Eigen::Index input_dim) {
  static const char* const kKeys[] = {
      "method",        "input_dim",      "hidden",        "activation",
      "prior",         "omega",          "epochs",        "batch_size",
      "learning_rate", "mc_samples",     "init_variance", "init_log_scale",
      "local_reparameterisation", "log_noise_var", "trainable_noise", "eval_samples", "hmc"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
      throw ConfigError("unknown method setting '" + key + "'");
    }
  }
  try {
    MethodSettings s;
    s.method = method_from_string(j.at("method").get<std::string>());
    s.arch = Architecture::mlp(j.value("input_dim", input_dim),
                               j.value("hidden", std::vector<Eigen::Index>{50}), 1,
                               activation_from_string(j.value("activation", std::string("tanh"))));
    s.arch.validate();
    s.prior_kind = j.value("prior", s.prior_kind);
    s.omega = j.value("omega", s.omega);
    s.train.epochs = j.value("epochs", s.train.epochs);
    s.train.batch_size = j.value("batch_size", s.train.batch_size);
    s.train.learning_rate = j.value("learning_rate", s.train.learning_rate);
    s.train.mc_samples = j.value("mc_samples", s.train.mc_samples);
    s.train.init_variance = j.value("init_variance", s.train.init_variance);
    s.train.init_log_scale = j.value("init_log_scale", s.train.init_log_scale);
    s.train.local_reparameterisation =
        j.value("local_reparameterisation", s.train.local_reparameterisation);
    s.lik.log_noise_var = j.value("log_noise_var", s.lik.log_noise_var);
    s.lik.trainable = j.value("trainable_noise", s.lik.trainable);
    s.eval_samples = j.value("eval_samples", s.eval_samples);
    if (j.contains("hmc")) {
      const auto& h = j.at("hmc");
      s.hmc.min_leapfrog_steps = h.value("min_leapfrog_steps", s.hmc.min_leapfrog_steps);
      s.hmc.max_leapfrog_steps = h.value("max_leapfrog_steps", s.hmc.max_leapfrog_steps);
      s.hmc.min_step_size = h.value("min_step_size", s.hmc.min_step_size);
      s.hmc.max_step_size = h.value("max_step_size", s.hmc.max_step_size);
      s.hmc.burn_in = h.value("burn_in", s.hmc.burn_in);
      s.hmc.n_samples = h.value("n_samples", s.hmc.n_samples);
      s.hmc.kept_samples = h.value("kept_samples", s.hmc.kept_samples);
    }
    s.train.validate();
    s.hmc.validate();
    if (s.eval_samples < 1) throw ConfigError("eval_samples must be positive");
    if (!(s.omega > 0.0)) throw ConfigError("omega must be positive");
    s.prior();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid method settings: ") + e.what());
  }
}

std::string MethodSettings::hash() const { return sha256_hex(to_json().dump()).substr(0, 16); }

std::optional<std::string> compatibility_warning(const MethodSettings& settings) {
  const bool laplace = settings.method == Method::LaplaceSampled ||
                       settings.method == Method::LaplaceLinearised;
  if (laplace && settings.arch.activation == Activation::Relu) {
    return "Laplace with ReLU: the network gradient is discontinuous, so the linearisation "
           "is unreliable";
  }
  return std::nullopt;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view key) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix(base ^ splitmix(h));
}

FittedModel model_from_checkpoint(const Checkpoint& ckpt, int eval_samples) {
  FittedModel model;
  model.settings.method = method_from_string(ckpt.method);
  if (model.settings.method == Method::Blr) {
    throw UnsupportedPosterior("BLR posteriors cannot be restored from a checkpoint");
  }
  model.settings.arch = ckpt.arch;
  model.settings.eval_samples = eval_samples;
  model.checkpoint = ckpt;
  return model;
}

FittedModel fit_model(const MethodSettings& settings, const Dataset& train, std::uint64_t seed) {
  const Architecture& arch = settings.arch;
  if (arch.input_dim != train.input_dim()) throw DimensionMismatch("fit_model: input width");
  TrainConfig tc = settings.train;
  tc.seed = seed;
  const PriorSpec prior = settings.prior();

  FittedModel model;
  model.settings = settings;
  Checkpoint& ck = model.checkpoint;
  ck.method = to_string(settings.method);
  ck.arch = arch;
  ck.prior = prior;
  ck.seed = seed;
  ck.config_hash = settings.hash();
  auto& diag = model.diagnostics;
  if (auto warning = compatibility_warning(settings)) diag["warning"] = *warning;

  switch (settings.method) {
    case Method::Map:
    case Method::LaplaceSampled:
    case Method::LaplaceLinearised:
    case Method::Hmc: {
      const MapResult map = train_map(arch, train, prior, settings.lik, tc);
      ck.log_noise_var = map.lik.log_noise_var;
      diag["map_log_joint"] = map.final_log_joint;
      diag["steps"] = map.steps;
      if (settings.method == Method::Map) {
        ck.posterior = PointPosterior{map.theta};
      } else if (settings.method == Method::Hmc) {
        HMCConfig hc = settings.hmc;
        hc.seed = derive_seed(seed, "hmc");
        ChainResult chain = run_chain(arch, train, prior, map.lik, hc, map.theta);
        diag["acceptance_rate"] = chain.acceptance_rate;
        diag["divergences"] = chain.divergences;
        if (!chain.warnings.empty()) diag["chain_warnings"] = chain.warnings;
        ck.posterior = SamplePosterior{std::move(chain.samples)};
      } else {
        LaplacePosterior post =
            gauss_newton_precision(arch, map.theta, train, prior, map.lik.noise_var());
        diag["jitter"] = post.precision_chol.jitter();
        ck.posterior = std::move(post);
      }
      break;
    }
    case Method::Mfvi: {
      MfviResult r = train_mfvi(arch, train, prior, settings.lik, tc);
      ck.log_noise_var = r.lik.log_noise_var;
      diag["initial_elbo"] = r.initial_elbo;
      diag["final_elbo"] = r.final_elbo;
      diag["steps"] = r.steps;
      ck.posterior = std::move(r.q);
      break;
    }
    case Method::Fcvi: {
      FcviResult r = train_fcvi(arch, train, prior, settings.lik, tc);
      ck.log_noise_var = r.lik.log_noise_var;
      diag["initial_elbo"] = r.initial_elbo;
      diag["final_elbo"] = r.final_elbo;
      diag["steps"] = r.steps;
      ck.posterior = std::move(r.q);
      break;
    }
    case Method::Blr: {
      const PriorSpec ml_prior = maximum_likelihood_input_prior(arch, prior);
      const MapResult ml = train_map(arch, train, ml_prior, settings.lik, tc);
      ck.log_noise_var = ml.lik.log_noise_var;
      const auto out = arch.layers().back();
      const Vector out_var = prior.variances.segment(out.weight_offset, out.fan_in + 1);
      model.blr = blr_last_layer(arch, ml.theta, train, out_var, ml.lik.noise_var());
      Vector theta = ml.theta;
      theta.segment(out.weight_offset, out.fan_in + 1) = model.blr->posterior.mean;
      ck.posterior = PointPosterior{std::move(theta)};
      diag["steps"] = ml.steps;
      diag["jitter"] = model.blr->posterior.precision_chol.jitter();
      break;
    }
  }
  diag["noise_var"] = model.noise_var();
  return model;
}

Evaluation evaluate_model(const FittedModel& model, const Matrix& x, const Vector& y,
                          std::uint64_t seed) {
  if (x.rows() != y.size()) throw DimensionMismatch("evaluate_model: rows");
  const Architecture& arch = model.settings.arch;
  const double noise_var = model.noise_var();
  const int m = model.settings.eval_samples;
  Rng rng(seed);

  if (model.blr) {
    const Matrix phi = hidden_features(model.blr->features, x);
    std::vector<GaussianPredictive> preds(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index n = 0; n < x.rows(); ++n) {
      preds[static_cast<std::size_t>(n)] = model.blr->posterior.predictive(phi.row(n).transpose());
    }
    return gaussian_evaluation(preds, y, noise_var);
  }

  const auto& posterior = model.checkpoint.posterior;
  if (const auto* p = std::get_if<PointPosterior>(&posterior)) {
    const Vector mean = forward_batch(arch, p->theta, x).col(0);
    std::vector<GaussianPredictive> preds(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index n = 0; n < x.rows(); ++n) preds[static_cast<std::size_t>(n)] = {mean[n], noise_var};
    return gaussian_evaluation(preds, y, noise_var);
  }
  if (const auto* lap = std::get_if<LaplacePosterior>(&posterior)) {
    if (model.settings.method == Method::LaplaceLinearised) {
      return gaussian_evaluation(linearised_predictive_batch(*lap, arch, x), y, noise_var);
    }
    std::vector<Vector> samples;
    for (int i = 0; i < m; ++i) samples.push_back(laplace_sample(*lap, rng));
    return mixture_evaluation(sample_outputs(arch, samples, x), y, noise_var);
  }
  if (const auto* s = std::get_if<SamplePosterior>(&posterior)) {
    return mixture_evaluation(sample_outputs(arch, s->samples, x), y, noise_var);
  }
  std::vector<Vector> samples;
  if (const auto* mf = std::get_if<MeanFieldPosterior>(&posterior)) {
    for (int i = 0; i < m; ++i) samples.push_back(sample_posterior(*mf, rng));
  } else {
    const auto& fc = std::get<FullCovPosterior>(posterior);
    for (int i = 0; i < m; ++i) samples.push_back(sample_posterior(fc, rng));
  }
  return mixture_evaluation(sample_outputs(arch, samples, x), y, noise_var);
}

}  // namespace ibnn
