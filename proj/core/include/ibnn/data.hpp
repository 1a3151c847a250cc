#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ibnn/dataset.hpp"

namespace ibnn {

/// Column layout of a dataset CSV: comma separated, optional header row,
/// the last `target_columns` columns are targets. `target` keeps a single
/// one of them (0-based among the targets); -1 keeps all.
struct CsvSchema {
  std::string name;
  std::string file;
  int target_columns = 1;
  int target = -1;
  bool header = true;

  static CsvSchema from_json(const nlohmann::json& j);
};

CsvSchema load_schema(const std::filesystem::path& path);

/// Parses a numeric CSV and records the SHA-256 of its bytes. Throws
/// ParseError naming the 1-based data row and column, or MissingValue for
/// empty fields and NA/NaN tokens.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);
Dataset parse_csv(std::string_view text, const CsvSchema& schema);

std::string sha256_hex(std::string_view bytes);

enum class SplitKind { Standard, Gap };

std::string to_string(SplitKind kind);
SplitKind split_kind_from_string(const std::string& name);

/// Train/validation/test indices of one split. Index lists are sorted.
struct SplitManifest {
  SplitKind kind = SplitKind::Standard;
  std::string dataset_hash;
  /// Input dimension that was sorted (gap splits).
  std::optional<int> dimension;
  /// Seed of the permutation (standard) or validation carve-out (both).
  std::optional<std::uint64_t> seed;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  /// Throws ConfigError unless the lists are disjoint, in range and test is nonempty.
  void validate(std::size_t n) const;
  std::vector<std::size_t> train_and_val() const;

  nlohmann::ordered_json to_json() const;
  static SplitManifest from_json(const nlohmann::json& j);
  /// Compact JSON followed by a newline; byte-stable for golden files.
  std::string serialize() const;
};

SplitManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const SplitManifest& manifest, const std::filesystem::path& path);

/// Number of validation points carved out of `n_train` training points:
/// round(0.1·n_train).
std::size_t validation_count(std::size_t n_train);

/// One split per input dimension: stable sort by that column (ties by
/// original index), test = sorted positions [⌊N/3⌋, ⌊N/3⌋ + ⌈N/3⌉), the
/// rest is training data with a seeded 10% validation carve-out.
std::vector<SplitManifest> make_gap_splits(const Dataset& data, std::uint64_t val_seed = 0);

/// Seeded uniform permutations with round(fraction·N) training points.
std::vector<SplitManifest> make_standard_splits(const Dataset& data, int n_splits,
                                                double train_fraction, std::uint64_t seed);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const { return x >= lo && x <= hi; }
  bool operator==(const Interval&) const = default;
};

/// x uniform in each cluster range, y = sin(frequency·x) + N(0, noise_std²).
Dataset synth_sine(int n_per_cluster, const std::vector<Interval>& clusters, double noise_std,
                   std::uint64_t seed, double frequency = 4.0);

/// Clusters used by the 1D in-between experiment.
std::vector<Interval> default_sine_clusters();

/// Per-column affine standardisation fitted on training (and validation) rows.
class Normalizer {
 public:
  Normalizer() = default;
  /// Fits on the given rows only. Constant columns get std 1 and a warning.
  static Normalizer fit(const Dataset& data, const std::vector<std::size_t>& rows);

  Dataset normalize(const Dataset& data) const;
  Matrix normalize_x(const Matrix& x) const;
  Matrix normalize_y(const Matrix& y) const;
  Matrix denormalize_y(const Matrix& y) const;

  /// Added to a per-point log density in normalised units to express it in
  /// original units: −Σ_k log std_y,k.
  double ll_unit_correction() const;

  const Vector& x_mean() const { return x_mean_; }
  const Vector& x_std() const { return x_std_; }
  const Vector& y_mean() const { return y_mean_; }
  const Vector& y_std() const { return y_std_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  static Normalizer from_moments(Vector x_mean, Vector x_std, Vector y_mean, Vector y_std);

 private:
  Vector x_mean_, x_std_, y_mean_, y_std_;
  std::vector<std::string> warnings_;
};

}  // namespace ibnn
