#include "ibnn/data.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace ibnn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool is_missing_token(std::string_view s) {
  if (s.empty() || s == "?") return true;
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower == "na" || lower == "nan" || lower == "null";
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

/// Splits `train` into (train, val) with a seeded shuffle; both sorted.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> carve_validation(
    std::vector<std::size_t> train, Rng& rng) {
  for (std::size_t i = train.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
    std::swap(train[i - 1], train[j]);
  }
  const std::size_t n_val = validation_count(train.size());
  std::vector<std::size_t> val(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n_val));
  train.erase(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n_val));
  return {sorted(std::move(train)), sorted(std::move(val))};
}

}  // namespace

CsvSchema CsvSchema::from_json(const nlohmann::json& j) {
  CsvSchema schema;
  schema.name = j.value("name", std::string{});
  schema.file = j.value("file", std::string{});
  schema.target_columns = j.value("target_columns", 1);
  schema.target = j.value("target", -1);
  schema.header = j.value("header", true);
  if (schema.target_columns < 1) throw ConfigError("schema: target_columns must be >= 1");
  if (schema.target < -1 || schema.target >= schema.target_columns) {
    throw ConfigError("schema: target must index one of the target columns");
  }
  return schema;
}

CsvSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file " + path.string());
  try {
    return CsvSchema::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid schema file " + path.string() + ": " + e.what());
  }
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::ostringstream out;
  out << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) out << std::setw(2) << static_cast<int>(digest[i]);
  return out.str();
}

Dataset parse_csv(std::string_view text, const CsvSchema& schema) {
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  std::size_t line_no = 0;
  std::size_t data_row = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = trim(text.substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    if (line.empty()) {
      if (eol >= text.size()) break;
      continue;
    }
    if (schema.header && line_no == 1) continue;
    ++data_row;
    const auto fields = split_fields(line);
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw ParseError("row " + std::to_string(data_row) + ": expected " + std::to_string(width) +
                           " columns, found " + std::to_string(fields.size()),
                       data_row, fields.size());
    }
    std::vector<double> values(width);
    for (std::size_t c = 0; c < width; ++c) {
      const std::string_view f = fields[c];
      if (is_missing_token(f)) {
        throw MissingValue("row " + std::to_string(data_row) + ", column " +
                           std::to_string(c + 1) + ": missing value");
      }
      const char* first = f.data();
      if (*first == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, f.data() + f.size(), values[c]);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(values[c])) {
        throw ParseError("row " + std::to_string(data_row) + ", column " + std::to_string(c + 1) +
                             ": cannot parse '" + std::string(f) + "' as a number",
                         data_row, c + 1);
      }
    }
    rows.push_back(std::move(values));
    if (eol >= text.size()) break;
  }
  if (rows.empty()) throw ParseError("no data rows", 0, 0);
  const auto k = static_cast<std::size_t>(schema.target_columns);
  if (width <= k) {
    throw ParseError("need at least one input column besides " + std::to_string(k) + " target(s)",
                     1, width);
  }
  Dataset data;
  data.name = schema.name;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(width - k);
  data.x.resize(n, d);
  const Eigen::Index first_target = schema.target < 0 ? 0 : schema.target;
  const Eigen::Index kept = schema.target < 0 ? static_cast<Eigen::Index>(k) : 1;
  data.y.resize(n, kept);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < d; ++c) data.x(r, c) = row[static_cast<std::size_t>(c)];
    for (Eigen::Index c = 0; c < kept; ++c) {
      data.y(r, c) = row[static_cast<std::size_t>(d + first_target + c)];
    }
  }
  data.content_hash = sha256_hex(text);
  return data;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  Dataset data = parse_csv(buf.str(), schema);
  if (data.name.empty()) data.name = path.stem().string();
  data.path = path.string();
  return data;
}

std::string to_string(SplitKind kind) { return kind == SplitKind::Gap ? "gap" : "standard"; }

SplitKind split_kind_from_string(const std::string& name) {
  if (name == "gap") return SplitKind::Gap;
  if (name == "standard") return SplitKind::Standard;
  throw ConfigError("unknown split kind '" + name + "' (expected standard or gap)");
}

void SplitManifest::validate(std::size_t n) const {
  if (test.empty()) throw ConfigError("split manifest has an empty test set");
  std::vector<char> seen(n, 0);
  for (const auto* list : {&train, &val, &test}) {
    for (std::size_t i : *list) {
      if (i >= n) throw ConfigError("split manifest index " + std::to_string(i) + " out of range");
      if (seen[i]) throw ConfigError("split manifest index " + std::to_string(i) + " repeated");
      seen[i] = 1;
    }
  }
}

std::vector<std::size_t> SplitManifest::train_and_val() const {
  std::vector<std::size_t> all = train;
  all.insert(all.end(), val.begin(), val.end());
  return sorted(std::move(all));
}

nlohmann::ordered_json SplitManifest::to_json() const {
  nlohmann::ordered_json j;
  j["dataset_hash"] = dataset_hash;
  j["kind"] = to_string(kind);
  if (dimension) j["d"] = *dimension;
  if (seed) j["seed"] = *seed;
  j["train"] = train;
  j["val"] = val;
  j["test"] = test;
  return j;
}

SplitManifest SplitManifest::from_json(const nlohmann::json& j) {
  try {
    SplitManifest m;
    m.dataset_hash = j.at("dataset_hash").get<std::string>();
    m.kind = split_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("d")) m.dimension = j.at("d").get<int>();
    if (j.contains("seed")) m.seed = j.at("seed").get<std::uint64_t>();
    m.train = j.at("train").get<std::vector<std::size_t>>();
    m.val = j.at("val").get<std::vector<std::size_t>>();
    m.test = j.at("test").get<std::vector<std::size_t>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid split manifest: ") + e.what());
  }
}

std::string SplitManifest::serialize() const { return to_json().dump() + "\n"; }

SplitManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  try {
    return SplitManifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
}

void save_manifest(const SplitManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write manifest " + path.string());
  out << manifest.serialize();
}

std::size_t validation_count(std::size_t n_train) {
  return static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n_train)));
}

std::vector<SplitManifest> make_gap_splits(const Dataset& data, std::uint64_t val_seed) {
  const auto n = static_cast<std::size_t>(data.size());
  if (n < 3) throw ConfigError("gap splits need at least 3 datapoints");
  const std::size_t start = n / 3;
  const std::size_t length = (n + 2) / 3;
  std::vector<SplitManifest> out;
  for (Eigen::Index d = 0; d < data.input_dim(); ++d) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return data.x(static_cast<Eigen::Index>(a), d) < data.x(static_cast<Eigen::Index>(b), d);
    });
    SplitManifest m;
    m.kind = SplitKind::Gap;
    m.dataset_hash = data.content_hash;
    m.dimension = static_cast<int>(d);
    m.seed = val_seed;
    std::vector<std::size_t> train;
    for (std::size_t pos = 0; pos < n; ++pos) {
      if (pos >= start && pos < start + length) {
        m.test.push_back(order[pos]);
      } else {
        train.push_back(order[pos]);
      }
    }
    m.test = sorted(std::move(m.test));
    Rng rng = Rng(val_seed).split(static_cast<std::uint64_t>(d));
    std::tie(m.train, m.val) = carve_validation(sorted(std::move(train)), rng);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<SplitManifest> make_standard_splits(const Dataset& data, int n_splits,
                                                double train_fraction, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(data.size());
  if (n_splits < 1) throw ConfigError("need at least one split");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie in (0, 1)");
  }
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) throw ConfigError("train fraction leaves an empty set");
  std::vector<SplitManifest> out;
  for (int s = 0; s < n_splits; ++s) {
    Rng rng = Rng(seed).split(static_cast<std::uint64_t>(s));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(perm[i - 1], perm[j]);
    }
    SplitManifest m;
    m.kind = SplitKind::Standard;
    m.dataset_hash = data.content_hash;
    m.seed = seed + static_cast<std::uint64_t>(s);
    m.test = sorted({perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end()});
    std::tie(m.train, m.val) =
        carve_validation({perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train)}, rng);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<Interval> default_sine_clusters() { return {{-1.0, -0.5}, {0.5, 1.0}}; }

Dataset synth_sine(int n_per_cluster, const std::vector<Interval>& clusters, double noise_std,
                   std::uint64_t seed, double frequency) {
  if (n_per_cluster < 1 || clusters.empty()) throw ConfigError("synth_sine: empty design");
  for (std::size_t a = 0; a < clusters.size(); ++a) {
    if (!(clusters[a].lo < clusters[a].hi)) throw ConfigError("synth_sine: empty cluster range");
    for (std::size_t b = a + 1; b < clusters.size(); ++b) {
      if (clusters[a].lo <= clusters[b].hi && clusters[b].lo <= clusters[a].hi) {
        throw ConfigError("synth_sine: cluster ranges overlap");
      }
    }
  }
  if (noise_std < 0.0) throw ConfigError("synth_sine: negative noise");
  Rng rng(seed);
  const auto n = static_cast<Eigen::Index>(n_per_cluster * static_cast<int>(clusters.size()));
  Dataset data;
  data.name = "synth_sine";
  data.x.resize(n, 1);
  data.y.resize(n, 1);
  Eigen::Index row = 0;
  for (const auto& c : clusters) {
    for (int i = 0; i < n_per_cluster; ++i, ++row) {
      const double x = rng.uniform(c.lo, c.hi);
      data.x(row, 0) = x;
      data.y(row, 0) = std::sin(frequency * x) + noise_std * rng.normal();
    }
  }
  std::ostringstream key;
  key << std::setprecision(17) << "synth_sine|" << n_per_cluster << '|' << noise_std << '|'
      << seed << '|' << frequency;
  for (const auto& c : clusters) key << '|' << c.lo << ',' << c.hi;
  data.content_hash = sha256_hex(key.str());
  return data;
}

Normalizer Normalizer::fit(const Dataset& data, const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw ConfigError("Normalizer::fit: no rows");
  const Dataset sub = data.subset(rows);
  Normalizer norm;
  auto moments = [&](const Matrix& m, Vector& mean, Vector& sd, const char* what) {
    mean = m.colwise().mean().transpose();
    sd.resize(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double var = (m.col(c).array() - mean[c]).square().mean();
      sd[c] = std::sqrt(var);
      if (!(sd[c] > 0.0)) {
        sd[c] = 1.0;
        norm.warnings_.push_back(std::string("constant ") + what + " column " + std::to_string(c) +
                                 " left unscaled");
      }
    }
  };
  moments(sub.x, norm.x_mean_, norm.x_std_, "input");
  moments(sub.y, norm.y_mean_, norm.y_std_, "target");
  return norm;
}

Normalizer Normalizer::from_moments(Vector x_mean, Vector x_std, Vector y_mean, Vector y_std) {
  Normalizer norm;
  norm.x_mean_ = std::move(x_mean);
  norm.x_std_ = std::move(x_std);
  norm.y_mean_ = std::move(y_mean);
  norm.y_std_ = std::move(y_std);
  return norm;
}

Matrix Normalizer::normalize_x(const Matrix& x) const {
  if (x.cols() != x_mean_.size()) throw DimensionMismatch("normalize_x: width");
  return ((x.rowwise() - x_mean_.transpose()).array().rowwise() / x_std_.transpose().array())
      .matrix();
}

Matrix Normalizer::normalize_y(const Matrix& y) const {
  if (y.cols() != y_mean_.size()) throw DimensionMismatch("normalize_y: width");
  return ((y.rowwise() - y_mean_.transpose()).array().rowwise() / y_std_.transpose().array())
      .matrix();
}

Matrix Normalizer::denormalize_y(const Matrix& y) const {
  if (y.cols() != y_mean_.size()) throw DimensionMismatch("denormalize_y: width");
  return ((y.array().rowwise() * y_std_.transpose().array()).matrix().rowwise() +
          y_mean_.transpose());
}

Dataset Normalizer::normalize(const Dataset& data) const {
  Dataset out = data;
  out.x = normalize_x(data.x);
  out.y = normalize_y(data.y);
  return out;
}

double Normalizer::ll_unit_correction() const { return -y_std_.array().log().sum(); }

}  // namespace ibnn
