#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "ibnn/data.hpp"
#include "ibnn/laplace.hpp"
#include "ibnn/vi.hpp"

namespace ibnn {

/// Point estimate (MAP).
struct PointPosterior {
  Vector theta;
};

/// Retained sampler draws (HMC).
struct SamplePosterior {
  std::vector<Vector> samples;
};

using StoredPosterior = std::variant<PointPosterior, MeanFieldPosterior, FullCovPosterior,
                                     LaplacePosterior, SamplePosterior>;

/// JSON posterior container. Doubles are written with round-trip precision.
///
/// Layout: {"format": "ibnn-posterior", "version": 1, "method", "architecture":
/// {input_dim, hidden_widths, output_dim, activation}, "layout": [{fan_in,
/// fan_out, weight_offset, bias_offset}], "prior_variances", "log_noise_var",
/// "seed", "config_hash", "posterior": {"kind", ...}}. Posterior kinds:
/// "point" {theta}, "meanfield" {mean, log_var}, "fullcov" {mean,
/// scale_param packed row-wise lower}, "laplace" {theta_map,
/// precision_chol packed, jitter}, "samples" {samples}. An optional
/// "normalizer" {x_mean, x_std, y_mean, y_std} records the data units.
struct Checkpoint {
  std::string method;
  Architecture arch;
  PriorSpec prior;
  double log_noise_var = -1.0;
  std::uint64_t seed = 0;
  std::string config_hash;
  StoredPosterior posterior;
  std::optional<Normalizer> normalizer;

  nlohmann::json to_json() const;
  static Checkpoint from_json(const nlohmann::json& j);
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json architecture_to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& j);

}  // namespace ibnn
