#include "ibnn/checkpoint.hpp"

#include <fstream>

namespace ibnn {

namespace {

constexpr const char* kFormat = "ibnn-posterior";
constexpr int kVersion = 1;

nlohmann::json vec(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector to_vector(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Matrix unpack_json(const nlohmann::json& j, Eigen::Index n) {
  const auto values = j.get<std::vector<double>>();
  if (values.size() != static_cast<std::size_t>(n * (n + 1) / 2)) {
    throw FormatError("packed lower triangle has the wrong length");
  }
  return unpack_lower(values, n);
}

struct PosteriorWriter {
  nlohmann::json operator()(const PointPosterior& p) const {
    return {{"kind", "point"}, {"theta", vec(p.theta)}};
  }
  nlohmann::json operator()(const MeanFieldPosterior& q) const {
    return {{"kind", "meanfield"}, {"mean", vec(q.mean)}, {"log_var", vec(q.log_var)}};
  }
  nlohmann::json operator()(const FullCovPosterior& q) const {
    return {{"kind", "fullcov"}, {"mean", vec(q.mean)}, {"scale_param", pack_lower(q.scale_param)}};
  }
  nlohmann::json operator()(const LaplacePosterior& post) const {
    return {{"kind", "laplace"},
            {"theta_map", vec(post.theta_map)},
            {"precision_chol", pack_lower(post.precision_chol.lower())},
            {"jitter", post.precision_chol.jitter()},
            {"noise_var", post.noise_var}};
  }
  nlohmann::json operator()(const SamplePosterior& s) const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& theta : s.samples) list.push_back(vec(theta));
    return {{"kind", "samples"}, {"samples", list}};
  }
};

StoredPosterior read_posterior(const nlohmann::json& j, Eigen::Index p) {
  const auto kind = j.at("kind").get<std::string>();
  auto checked = [p](Vector v) {
    if (v.size() != p) throw FormatError("posterior vector length does not match architecture");
    return v;
  };
  if (kind == "point") return PointPosterior{checked(to_vector(j.at("theta")))};
  if (kind == "meanfield") {
    return MeanFieldPosterior{checked(to_vector(j.at("mean"))), checked(to_vector(j.at("log_var")))};
  }
  if (kind == "fullcov") {
    return FullCovPosterior{checked(to_vector(j.at("mean"))), unpack_json(j.at("scale_param"), p)};
  }
  if (kind == "laplace") {
    LaplacePosterior post;
    post.theta_map = checked(to_vector(j.at("theta_map")));
    post.precision_chol =
        CholeskyFactor(unpack_json(j.at("precision_chol"), p), j.at("jitter").get<double>());
    const double jitter = post.precision_chol.jitter();
    post.precision = post.precision_chol.reconstruct();
    post.precision.diagonal().array() -= jitter;
    post.noise_var = j.at("noise_var").get<double>();
    return post;
  }
  if (kind == "samples") {
    SamplePosterior s;
    for (const auto& row : j.at("samples")) s.samples.push_back(checked(to_vector(row)));
    return s;
  }
  throw FormatError("unknown posterior kind '" + kind + "'");
}

}  // namespace

nlohmann::json architecture_to_json(const Architecture& arch) {
  return {{"input_dim", arch.input_dim},
          {"hidden_widths", arch.hidden_widths},
          {"output_dim", arch.output_dim},
          {"activation", to_string(arch.activation)}};
}

Architecture architecture_from_json(const nlohmann::json& j) {
  Architecture arch = Architecture::mlp(
      j.at("input_dim").get<Eigen::Index>(), j.at("hidden_widths").get<std::vector<Eigen::Index>>(),
      j.at("output_dim").get<Eigen::Index>(), activation_from_string(j.at("activation")));
  arch.validate();
  return arch;
}

nlohmann::json Checkpoint::to_json() const {
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& l : arch.layers()) {
    layout.push_back({{"fan_in", l.fan_in},
                      {"fan_out", l.fan_out},
                      {"weight_offset", l.weight_offset},
                      {"bias_offset", l.bias_offset}});
  }
  nlohmann::json j = {{"format", kFormat},
          {"version", kVersion},
          {"method", method},
          {"architecture", architecture_to_json(arch)},
          {"layout", layout},
          {"prior_variances", vec(prior.variances)},
          {"log_noise_var", log_noise_var},
          {"seed", seed},
          {"config_hash", config_hash},
          {"posterior", std::visit(PosteriorWriter{}, posterior)}};
  if (normalizer) {
    j["normalizer"] = {{"x_mean", vec(normalizer->x_mean())},
                       {"x_std", vec(normalizer->x_std())},
                       {"y_mean", vec(normalizer->y_mean())},
                       {"y_std", vec(normalizer->y_std())}};
  }
  return j;
}

Checkpoint Checkpoint::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != kFormat) throw FormatError("not an ibnn posterior file");
    if (j.at("version").get<int>() != kVersion) throw FormatError("unsupported checkpoint version");
    Checkpoint c;
    c.method = j.at("method").get<std::string>();
    c.arch = architecture_from_json(j.at("architecture"));
    c.prior.variances = to_vector(j.at("prior_variances"));
    if (c.prior.variances.size() != c.arch.num_params()) {
      throw FormatError("prior length does not match architecture");
    }
    c.log_noise_var = j.at("log_noise_var").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.config_hash = j.at("config_hash").get<std::string>();
    c.posterior = read_posterior(j.at("posterior"), c.arch.num_params());
    if (j.contains("normalizer")) {
      const auto& n = j.at("normalizer");
      c.normalizer = Normalizer::from_moments(to_vector(n.at("x_mean")), to_vector(n.at("x_std")),
                                              to_vector(n.at("y_mean")), to_vector(n.at("y_std")));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out << ckpt.to_json().dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  try {
    return Checkpoint::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace ibnn
