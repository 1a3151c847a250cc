#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ibnn/runner.hpp"

namespace ibnn {

/// Named hyperparameter presets ("paper", "mini") compiled into the library
/// from presets/*.json.
nlohmann::json load_preset(const std::string& name);

/// preset[section], then the user's config merged over it (RFC 7386), then
/// the seed override.
nlohmann::json resolve_section(const nlohmann::json& preset, const nlohmann::json& user,
                               const std::string& section,
                               std::optional<std::uint64_t> seed = std::nullopt);

/// Directory with <name>.csv, optional <name>.json schemas and golden/ manifests,
/// taken from the IBNN_DATA_DIR environment variable.
std::filesystem::path data_dir_from_env();

/// Loads `<dir>/<name>.csv` using `<dir>/<name>.json` as schema when present.
Dataset load_named_dataset(const std::filesystem::path& dir, const std::string& name);

/// `<dir>/golden/<name>/gap_<dd>.json`.
std::filesystem::path golden_manifest_path(const std::filesystem::path& dir,
                                           const std::string& name, int dimension);

// ---------------------------------------------------------------- synth1d

struct Synth1dMethodResult {
  std::string method;
  double ratio = 0.0;
  Vector probe_mean;
  Vector probe_std;
  nlohmann::json diagnostics;
};

struct Synth1dResult {
  Dataset data;
  Vector probes;
  std::vector<Synth1dMethodResult> methods;

  const Synth1dMethodResult& find(const std::string& method) const;
  nlohmann::json report() const;
  std::string svg() const;
};

Synth1dResult run_synth1d(const nlohmann::json& config, int jobs, std::ostream& log);

// ---------------------------------------------------------------- bench

struct RunRecord {
  std::string dataset;
  std::string dataset_hash;
  std::string label;
  std::string method;
  std::string split_kind;
  int split_id = 0;
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json hyperparameters;
  double val_ll = 0.0;
  double test_ll = 0.0;
  double test_rmse = 0.0;
  std::string status = "ok";
  std::string error;
  nlohmann::json diagnostics = nlohmann::json::object();
  /// Kept out of to_json so reruns are byte-identical; written to timing.jsonl.
  double wall_time = 0.0;

  nlohmann::ordered_json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

/// Per (label, dataset) mean and standard error of test LL over ok splits.
struct SummaryCell {
  std::size_t n = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
};

struct BenchResult {
  std::vector<RunRecord> records;
  std::vector<std::string> labels;
  std::vector<std::string> datasets;

  SummaryCell cell(const std::string& label, const std::string& dataset) const;
  /// Rows = method label, columns = dataset, cells "mean ± SE".
  std::string summary_csv() const;
};

/// Grid search on validation LL, retrain on train+val, test. Failures are
/// recorded, not thrown. `manifest_dir` receives the manifests used.
BenchResult run_bench(const nlohmann::json& config, const std::filesystem::path& data_dir,
                      int jobs, std::ostream& log,
                      const std::optional<std::filesystem::path>& manifest_dir = std::nullopt,
                      const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

/// All grid points of a method for a dataset, in lexicographic order.
std::vector<nlohmann::json> expand_grid(const nlohmann::json& method_grid, bool large_dataset);

/// Index of the best score; ties within `tolerance` go to the earliest index.
std::size_t select_winner(const std::vector<double>& scores, double tolerance = 1e-9);

// ---------------------------------------------------------------- splits

/// Gap splits (one per input dimension) or seeded standard splits.
std::vector<SplitManifest> make_splits(const Dataset& data, SplitKind kind,
                                       const nlohmann::json& config);

/// Compares gap manifests of `data` against the golden files byte for byte.
/// Returns the names of mismatching or missing files.
std::vector<std::string> check_golden(const Dataset& data, const std::filesystem::path& dir);

// ---------------------------------------------------------------- theory

struct TheoryResult {
  std::size_t networks = 0;
  std::size_t hessian_probes = 0;
  std::size_t kink_perturbations = 0;
  double min_hessian_eigenvalue = 0.0;
  std::size_t convexity_pairs = 0;
  std::size_t convexity_violations = 0;
  double worst_convexity_gap = 0.0;
  ConvexityReport blr_convexity;
  ConvexityReport mfvi_output_convexity;
  double blr_ratio = 0.0;
  double mfvi_output_ratio = 0.0;
  double two_unit_max_mismatch = 0.0;
  FitResidual two_unit_residual;

  bool hessians_psd() const { return min_hessian_eigenvalue >= -1e-10; }
  bool all_pass() const;
  nlohmann::json report() const;
};

TheoryResult run_check_theory(const nlohmann::json& config, std::ostream& log);

// ---------------------------------------------------------------- commands

struct CommandContext {
  nlohmann::json preset;
  nlohmann::json user_config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir = ".";
  int jobs = 1;
  std::ostream* log = nullptr;
};

int cmd_synth1d(const CommandContext& ctx);
int cmd_bench(const CommandContext& ctx);
int cmd_splits(const CommandContext& ctx, const std::string& dataset, SplitKind kind,
               bool check);
int cmd_check_theory(const CommandContext& ctx);
int cmd_plot(const CommandContext& ctx, const std::filesystem::path& records);
int cmd_eval(const CommandContext& ctx, const std::filesystem::path& checkpoint,
             const std::filesystem::path& csv, const std::optional<std::filesystem::path>& manifest);

std::vector<RunRecord> read_records(const std::filesystem::path& path);

}  // namespace ibnn
