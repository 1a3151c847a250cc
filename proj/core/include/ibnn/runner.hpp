#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "ibnn/analysis.hpp"
#include "ibnn/checkpoint.hpp"
#include "ibnn/hmc.hpp"

namespace ibnn {

enum class Method { Map, Mfvi, Fcvi, LaplaceSampled, LaplaceLinearised, Hmc, Blr };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

/// A fully resolved inference setup: one grid point of one method.
struct MethodSettings {
  Method method = Method::Map;
  Architecture arch;
  /// "uniform" (N(0, ω²) everywhere) or "fan_in" (N(0, 1) biases, N(0, ω²/H) weights).
  std::string prior_kind = "uniform";
  double omega = 1.0;
  TrainConfig train;
  LikelihoodSpec lik;
  HMCConfig hmc;
  int eval_samples = 100;

  PriorSpec prior() const;
  /// Canonical JSON (sorted keys); hashing it gives the config hash.
  nlohmann::json to_json() const;
  static MethodSettings from_json(const nlohmann::json& j, Eigen::Index input_dim);
  std::string hash() const;
};

/// Laplace with ReLU is allowed but the linearisation is known to misbehave there.
std::optional<std::string> compatibility_warning(const MethodSettings& settings);

/// Mixes a base seed with a textual key (FNV-1a then splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::string_view key);

struct FittedModel {
  MethodSettings settings;
  Checkpoint checkpoint;
  std::optional<BlrLastLayer> blr;
  nlohmann::json diagnostics = nlohmann::json::object();

  double noise_var() const { return std::exp(checkpoint.log_noise_var); }
};

/// Rebuilds a predictor from a stored posterior. BLR posteriors are not
/// stored in checkpoints.
FittedModel model_from_checkpoint(const Checkpoint& ckpt, int eval_samples = 100);

/// Trains the configured method on `train` (already normalised).
FittedModel fit_model(const MethodSettings& settings, const Dataset& train, std::uint64_t seed);

/// Per-point test log density, predictive mean and function std (output
/// noise excluded), in the units the model was trained in.
struct Evaluation {
  Vector log_lik;
  Vector mean;
  Vector function_std;
};

/// Monte Carlo methods draw `eval_samples` posterior samples from `seed`;
/// HMC reuses its stored draws.
Evaluation evaluate_model(const FittedModel& model, const Matrix& x, const Vector& y,
                          std::uint64_t seed);

}  // namespace ibnn
