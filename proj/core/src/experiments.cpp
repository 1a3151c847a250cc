#include "ibnn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "ibnn/svg.hpp"

namespace ibnn {

std::string_view embedded_preset(const std::string& name);  // generated

namespace {

namespace fs = std::filesystem;

std::mutex g_log_mutex;

void log_line(std::ostream& log, const std::string& line) {
  std::lock_guard lock(g_log_mutex);
  log << line << '\n' << std::flush;
}

/// Runs f(0..n-1) on up to `jobs` threads; rethrows the first exception.
template <typename F>
void parallel_for(std::size_t n, int jobs, F&& f) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<Interval> parse_intervals(const nlohmann::json& j) {
  std::vector<Interval> out;
  for (const auto& pair : j) {
    if (!pair.is_array() || pair.size() != 2) throw ConfigError("intervals are [lo, hi] pairs");
    out.push_back({pair[0].get<double>(), pair[1].get<double>()});
  }
  return out;
}

Vector probe_grid(const nlohmann::json& j) {
  const double lo = j.at("lo").get<double>();
  const double hi = j.at("hi").get<double>();
  const int n = j.at("n").get<int>();
  if (n < 2 || !(hi > lo)) throw ConfigError("probe grid needs n >= 2 and hi > lo");
  Vector x(n);
  for (int i = 0; i < n; ++i) x[i] = lo + (hi - lo) * i / (n - 1);
  return x;
}

Dataset sine_from_config(const nlohmann::json& c) {
  return synth_sine(c.value("n_per_cluster", 50), parse_intervals(c.at("clusters")),
                    c.value("noise_std", 0.1), c.value("data_seed", std::uint64_t{0}),
                    c.value("frequency", 4.0));
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::string run_label(const nlohmann::json& run) {
  const auto hidden = run.value("hidden", std::vector<int>{50});
  return run.at("method").get<std::string>() + "-" + std::to_string(hidden.size()) + "hl-" +
         run.value("activation", std::string("tanh"));
}

double mean_or_neg_inf(const Vector& v) {
  const double m = v.mean();
  return std::isfinite(m) ? m : -std::numeric_limits<double>::infinity();
}

std::string two_digits(int d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", d);
  return buf;
}

}  // namespace

nlohmann::json load_preset(const std::string& name) {
  const std::string_view text = embedded_preset(name);
  if (text.empty()) throw ConfigError("unknown preset '" + name + "' (expected paper or mini)");
  return nlohmann::json::parse(text);
}

nlohmann::json resolve_section(const nlohmann::json& preset, const nlohmann::json& user,
                               const std::string& section, std::optional<std::uint64_t> seed) {
  nlohmann::json out = preset.contains(section) ? preset.at(section) : nlohmann::json::object();
  if (user.is_object()) {
    if (user.contains(section)) {
      out.merge_patch(user.at(section));
    }
  } else if (!user.is_null()) {
    throw ConfigError("config file must hold a JSON object");
  }
  if (seed) out["seed"] = *seed;
  return out;
}

fs::path data_dir_from_env() {
  const char* dir = std::getenv("IBNN_DATA_DIR");
  if (dir == nullptr || *dir == '\0') {
    throw ConfigError("set IBNN_DATA_DIR to the directory holding the dataset CSV files");
  }
  return dir;
}

Dataset load_named_dataset(const fs::path& dir, const std::string& name) {
  CsvSchema schema;
  const fs::path schema_path = dir / (name + ".json");
  if (fs::exists(schema_path)) schema = load_schema(schema_path);
  if (schema.name.empty()) schema.name = name;
  if (schema.file.empty()) schema.file = name + ".csv";
  Dataset data = load_csv(dir / schema.file, schema);
  data.name = name;
  return data;
}

fs::path golden_manifest_path(const fs::path& dir, const std::string& name, int dimension) {
  return dir / "golden" / name / ("gap_" + two_digits(dimension) + ".json");
}

// ---------------------------------------------------------------- synth1d

const Synth1dMethodResult& Synth1dResult::find(const std::string& method) const {
  for (const auto& m : methods) {
    if (m.method == method) return m;
  }
  throw ConfigError("synth1d result has no method '" + method + "'");
}

nlohmann::json Synth1dResult::report() const {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json j;
  j["dataset_hash"] = data.content_hash;
  j["probes"] = vec(probes);
  for (const auto& m : methods) {
    j["methods"][m.method] = {{"uncertainty_ratio", m.ratio},
                              {"diagnostics", m.diagnostics},
                              {"mean", vec(m.probe_mean)},
                              {"std", vec(m.probe_std)}};
  }
  return j;
}

std::string Synth1dResult::svg() const {
  std::vector<svg::Band> bands;
  for (const auto& m : methods) {
    char label[96];
    if (std::isnan(m.ratio)) {
      std::snprintf(label, sizeof label, "%s", m.method.c_str());
    } else {
      std::snprintf(label, sizeof label, "%s (ratio %.2f)", m.method.c_str(), m.ratio);
    }
    bands.push_back({label, probes, m.probe_mean, m.probe_std});
  }
  return svg::band_plot(bands, data.x.col(0), data.y.col(0));
}

Synth1dResult run_synth1d(const nlohmann::json& config, int jobs, std::ostream& log) {
  Synth1dResult result;
  result.data = sine_from_config(config);
  result.probes = probe_grid(config.at("probe"));
  const auto data_regions = parse_intervals(config.at("data_regions"));
  const auto gap_regions = parse_intervals(config.at("gap_regions"));
  const auto methods = config.at("methods").get<std::vector<std::string>>();
  const nlohmann::json common = config.value("common", nlohmann::json::object());
  const nlohmann::json overrides = config.value("overrides", nlohmann::json::object());
  const auto seed = config.value("seed", std::uint64_t{0});
  const Matrix probe_x = result.probes;

  result.methods.resize(methods.size());
  parallel_for(methods.size(), jobs, [&](std::size_t i) {
    nlohmann::json j = common;
    if (overrides.contains(methods[i])) j.merge_patch(overrides.at(methods[i]));
    j["method"] = methods[i];
    const MethodSettings settings = MethodSettings::from_json(j, 1);
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t s = derive_seed(seed, "synth1d/" + methods[i]);
    const FittedModel model = fit_model(settings, result.data, s);
    const Evaluation ev =
        evaluate_model(model, probe_x, Vector::Zero(probe_x.rows()), derive_seed(s, "eval"));
    auto& out = result.methods[i];
    out.method = methods[i];
    out.probe_mean = ev.mean;
    out.probe_std = ev.function_std;
    // A point estimate has zero spread everywhere; its ratio is 0/0 and stays NaN.
    out.ratio = uncertainty_ratio(result.probes, ev.function_std, data_regions, gap_regions);
    out.diagnostics = model.diagnostics;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char line[160];
    if (std::isnan(out.ratio)) {
      std::snprintf(line, sizeof line, "synth1d %-20s ratio n/a (no spread)  (%.1fs)",
                    methods[i].c_str(), secs);
    } else {
      std::snprintf(line, sizeof line, "synth1d %-20s ratio %.3f  (%.1fs)", methods[i].c_str(),
                    out.ratio, secs);
    }
    log_line(log, line);
  });
  return result;
}

// ---------------------------------------------------------------- bench

nlohmann::ordered_json RunRecord::to_json() const {
  nlohmann::ordered_json j;
  j["dataset"] = dataset;
  j["dataset_hash"] = dataset_hash;
  j["split_kind"] = split_kind;
  j["split_id"] = split_id;
  j["label"] = label;
  j["method"] = method;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["hyperparameters"] = hyperparameters;
  j["val_ll"] = val_ll;
  j["test_ll"] = test_ll;
  j["test_rmse"] = test_rmse;
  j["status"] = status;
  if (!error.empty()) j["error"] = error;
  j["diagnostics"] = diagnostics;
  return j;
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
  try {
    RunRecord r;
    r.dataset = j.at("dataset").get<std::string>();
    r.dataset_hash = j.value("dataset_hash", std::string{});
    r.split_kind = j.value("split_kind", std::string{});
    r.split_id = j.at("split_id").get<int>();
    r.label = j.at("label").get<std::string>();
    r.method = j.value("method", std::string{});
    r.config_hash = j.value("config_hash", std::string{});
    r.seed = j.value("seed", std::uint64_t{0});
    r.hyperparameters = j.value("hyperparameters", nlohmann::json::object());
    r.val_ll = j.at("val_ll").is_number() ? j.at("val_ll").get<double>() : NAN;
    r.test_ll = j.at("test_ll").is_number() ? j.at("test_ll").get<double>() : NAN;
    r.test_rmse = j.at("test_rmse").is_number() ? j.at("test_rmse").get<double>() : NAN;
    r.status = j.value("status", std::string("ok"));
    r.error = j.value("error", std::string{});
    r.diagnostics = j.value("diagnostics", nlohmann::json::object());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed run record: ") + e.what());
  }
}

SummaryCell BenchResult::cell(const std::string& label, const std::string& dataset) const {
  std::vector<double> v;
  for (const auto& r : records) {
    if (r.label == label && r.dataset == dataset && r.status == "ok") v.push_back(r.test_ll);
  }
  SummaryCell c;
  c.n = v.size();
  if (v.empty()) return c;
  c.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - c.mean) * (x - c.mean);
    c.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return c;
}

std::string BenchResult::summary_csv() const {
  std::ostringstream out;
  out << "method";
  for (const auto& d : datasets) out << ',' << d;
  out << '\n';
  for (const auto& label : labels) {
    out << label;
    for (const auto& d : datasets) {
      const SummaryCell c = cell(label, d);
      if (c.n == 0) {
        out << ",n/a";
      } else {
        char buf[64];
        std::snprintf(buf, sizeof buf, ",%.2f ± %.2f", c.mean, c.stderr_);
        out << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

std::vector<nlohmann::json> expand_grid(const nlohmann::json& method_grid, bool large_dataset) {
  nlohmann::json grid = method_grid.value("grid", nlohmann::json::object());
  if (large_dataset && method_grid.contains("grid_large")) grid.merge_patch(method_grid.at("grid_large"));
  const nlohmann::json fixed = method_grid.value("fixed", nlohmann::json::object());
  std::vector<nlohmann::json> points{fixed};
  // nlohmann::json objects iterate keys in sorted order; the first key varies slowest.
  for (const auto& [key, values] : grid.items()) {
    if (!values.is_array() || values.empty()) {
      throw ConfigError("grid entry '" + key + "' must be a nonempty list");
    }
    std::vector<nlohmann::json> next;
    for (const auto& p : points) {
      for (const auto& v : values) {
        nlohmann::json q = p;
        q[key] = v;
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  return points;
}

std::size_t select_winner(const std::vector<double>& scores, double tolerance) {
  if (scores.empty()) throw ConfigError("select_winner: no scores");
  double best = -std::numeric_limits<double>::infinity();
  for (double s : scores) {
    if (s > best) best = s;
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= best - tolerance) return i;
  }
  return 0;
}

namespace {

struct PreparedDataset {
  Dataset data;
  std::vector<SplitManifest> splits;
  bool large = false;
};

struct BenchJob {
  std::size_t dataset;
  std::size_t run;
  std::size_t split;
};

RunRecord run_bench_job(const PreparedDataset& prep, const nlohmann::json& run,
                        const nlohmann::json& grids, const nlohmann::json& config,
                        std::size_t split_index, const std::optional<fs::path>& checkpoint_dir,
                        std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  const Dataset& data = prep.data;
  const SplitManifest& split = prep.splits[split_index];
  RunRecord rec;
  rec.dataset = data.name;
  rec.dataset_hash = data.content_hash;
  rec.label = run_label(run);
  rec.method = run.at("method").get<std::string>();
  rec.split_kind = to_string(split.kind);
  rec.split_id = split.dimension ? *split.dimension : static_cast<int>(split_index);
  const auto base_seed = config.value("seed", std::uint64_t{0});
  const std::string key = rec.dataset + "/" + rec.label + "/" + rec.split_kind + "/" +
                          std::to_string(rec.split_id);
  rec.seed = derive_seed(base_seed, key);

  try {
    if (!grids.contains(rec.method)) throw ConfigError("no grid for method '" + rec.method + "'");
    split.validate(static_cast<std::size_t>(data.size()));
    auto settings_for = [&](const nlohmann::json& point) {
      nlohmann::json j = point;
      j.merge_patch(run);
      if (config.contains("eval_samples")) j["eval_samples"] = config.at("eval_samples");
      return MethodSettings::from_json(j, data.input_dim());
    };
    const auto points = expand_grid(grids.at(rec.method), prep.large);

    std::size_t winner = 0;
    std::vector<double> scores(points.size(), -std::numeric_limits<double>::infinity());
    if (points.size() > 1 && !split.val.empty()) {
      const Normalizer norm = Normalizer::fit(data, split.train);
      const Dataset train = norm.normalize(data.subset(split.train));
      const Dataset val = norm.normalize(data.subset(split.val));
      for (std::size_t g = 0; g < points.size(); ++g) {
        const std::uint64_t s = derive_seed(rec.seed, "grid/" + std::to_string(g));
        try {
          const FittedModel model = fit_model(settings_for(points[g]), train, s);
          scores[g] = mean_or_neg_inf(
              evaluate_model(model, val.x, val.y.col(0), derive_seed(s, "eval")).log_lik);
        } catch (const Error& e) {
          rec.diagnostics["grid_failures"].push_back({{"grid_index", g}, {"error", e.what()}});
        }
      }
      winner = select_winner(scores);
      if (!std::isfinite(scores[winner])) throw NonFiniteLoss("every grid point failed");
      rec.val_ll = scores[winner] + norm.ll_unit_correction();
    }
    const MethodSettings best = settings_for(points[winner]);
    rec.hyperparameters = points[winner];
    rec.config_hash = best.hash();

    const auto train_val = split.train_and_val();
    const Normalizer norm = Normalizer::fit(data, train_val);
    const Dataset train = norm.normalize(data.subset(train_val));
    const Dataset test_raw = data.subset(split.test);
    const Dataset test = norm.normalize(test_raw);
    const std::uint64_t s = derive_seed(rec.seed, "final");
    FittedModel model = fit_model(best, train, s);
    const Evaluation ev = evaluate_model(model, test.x, test.y.col(0), derive_seed(s, "eval"));
    rec.test_ll = ev.log_lik.mean() + norm.ll_unit_correction();
    const Matrix pred = norm.denormalize_y(ev.mean);
    rec.test_rmse = std::sqrt((pred.col(0) - test_raw.y.col(0)).squaredNorm() /
                              static_cast<double>(test_raw.size()));
    for (const auto& [k, v] : model.diagnostics.items()) rec.diagnostics[k] = v;
    if (!norm.warnings().empty()) rec.diagnostics["normalizer_warnings"] = norm.warnings();
    if (!std::isfinite(rec.test_ll)) throw NonFiniteLoss("non-finite test log-likelihood");
    if (checkpoint_dir) {
      model.checkpoint.normalizer = norm;
      save_checkpoint(model.checkpoint, *checkpoint_dir / (rec.dataset + "_" + rec.label + "_" +
                                                           rec.split_kind + "_" +
                                                           two_digits(rec.split_id) + ".json"));
    }
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.error = e.what();
  }
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char line[256];
  std::snprintf(line, sizeof line, "bench %-10s %-26s %s %2d  test LL %9.3f  RMSE %7.3f  %s (%.1fs)",
                rec.dataset.c_str(), rec.label.c_str(), rec.split_kind.c_str(), rec.split_id,
                rec.test_ll, rec.test_rmse, rec.status.c_str(), rec.wall_time);
  log_line(log, line);
  return rec;
}

}  // namespace

std::vector<SplitManifest> make_splits(const Dataset& data, SplitKind kind,
                                       const nlohmann::json& config) {
  if (data.size() < 10) {
    throw ConfigError("dataset '" + data.name + "' has fewer than 10 rows");
  }
  if (kind == SplitKind::Gap) {
    return make_gap_splits(data, config.value("split_seed", std::uint64_t{0}));
  }
  return make_standard_splits(data, config.value("n_splits", 20),
                              config.value("train_fraction", 0.9),
                              config.value("split_seed", std::uint64_t{0}));
}

std::vector<std::string> check_golden(const Dataset& data, const fs::path& dir) {
  std::vector<std::string> bad;
  const auto manifests = make_gap_splits(data, 0);
  for (const auto& m : manifests) {
    const fs::path path = golden_manifest_path(dir, data.name, *m.dimension);
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      bad.push_back(path.string() + " (missing)");
      continue;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (buf.str() != m.serialize()) bad.push_back(path.string() + " (differs)");
  }
  return bad;
}

BenchResult run_bench(const nlohmann::json& config, const fs::path& data_dir, int jobs,
                      std::ostream& log, const std::optional<fs::path>& manifest_dir,
                      const std::optional<fs::path>& checkpoint_dir) {
  const auto names = config.at("datasets").get<std::vector<std::string>>();
  const SplitKind kind = split_kind_from_string(config.value("kind", std::string("standard")));
  const auto runs = config.at("runs");
  const auto grids = config.at("grids");
  const auto large = config.value("large_datasets", std::vector<std::string>{});
  std::optional<std::set<int>> only;
  if (config.contains("splits") && !config.at("splits").is_null()) {
    only = config.at("splits").get<std::set<int>>();
  }

  BenchResult result;
  result.datasets = names;
  for (const auto& run : runs) {
    const std::string label = run_label(run);
    if (std::find(result.labels.begin(), result.labels.end(), label) == result.labels.end()) {
      result.labels.push_back(label);
    }
  }

  std::vector<PreparedDataset> prepared;
  for (const auto& name : names) {
    PreparedDataset prep;
    prep.data = load_named_dataset(data_dir, name);
    prep.large = std::find(large.begin(), large.end(), name) != large.end();
    prep.splits = make_splits(prep.data, kind, config);
    if (kind == SplitKind::Gap) {
      for (auto& m : prep.splits) {
        const fs::path golden = golden_manifest_path(data_dir, name, *m.dimension);
        if (fs::exists(golden)) {
          const SplitManifest g = load_manifest(golden);
          if (g.dataset_hash != prep.data.content_hash) {
            throw ConfigError("dataset " + name + " does not match the hash in " + golden.string());
          }
          if (g.serialize() != m.serialize()) {
            throw ConfigError("golden manifest " + golden.string() + " differs from the split rule");
          }
          m = g;
        } else {
          log_line(log, "warning: no golden manifest " + golden.string() + "; using generated split");
        }
      }
    }
    if (manifest_dir) {
      for (std::size_t s = 0; s < prep.splits.size(); ++s) {
        const auto& m = prep.splits[s];
        const int id = m.dimension ? *m.dimension : static_cast<int>(s);
        fs::create_directories(*manifest_dir / name);
        save_manifest(m, *manifest_dir / name / (to_string(kind) + "_" + two_digits(id) + ".json"));
      }
    }
    prepared.push_back(std::move(prep));
  }
  if (checkpoint_dir) fs::create_directories(*checkpoint_dir);

  std::vector<BenchJob> jobs_list;
  for (std::size_t d = 0; d < prepared.size(); ++d) {
    for (std::size_t r = 0; r < runs.size(); ++r) {
      for (std::size_t s = 0; s < prepared[d].splits.size(); ++s) {
        const auto& m = prepared[d].splits[s];
        const int id = m.dimension ? *m.dimension : static_cast<int>(s);
        if (only && !only->count(id)) continue;
        jobs_list.push_back({d, r, s});
      }
    }
  }
  result.records.resize(jobs_list.size());
  parallel_for(jobs_list.size(), jobs, [&](std::size_t i) {
    const auto& job = jobs_list[i];
    result.records[i] = run_bench_job(prepared[job.dataset], runs[job.run], grids, config,
                                      job.split, checkpoint_dir, log);
  });
  // Job order is already (dataset, run, split); sorting keeps the output
  // independent of how the pool interleaved work.
  std::stable_sort(result.records.begin(), result.records.end(),
                   [&](const RunRecord& a, const RunRecord& b) {
                     const auto da = std::find(names.begin(), names.end(), a.dataset) - names.begin();
                     const auto db = std::find(names.begin(), names.end(), b.dataset) - names.begin();
                     if (da != db) return da < db;
                     const auto la = std::find(result.labels.begin(), result.labels.end(), a.label) -
                                     result.labels.begin();
                     const auto lb = std::find(result.labels.begin(), result.labels.end(), b.label) -
                                     result.labels.begin();
                     if (la != lb) return la < lb;
                     return a.split_id < b.split_id;
                   });
  return result;
}

std::vector<RunRecord> read_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open records file " + path.string());
  std::vector<RunRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(RunRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError("records file " + path.string() + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------- theory

bool TheoryResult::all_pass() const {
  return hessians_psd() && convexity_violations == 0 && blr_convexity.violations >= 1 &&
         mfvi_output_convexity.violations == 0 && two_unit_max_mismatch == 0.0 &&
         two_unit_residual.left == 0.0 && two_unit_residual.right == 0.0;
}

nlohmann::json TheoryResult::report() const {
  return {{"networks", networks},
          {"hessian_probes", hessian_probes},
          {"kink_perturbations", kink_perturbations},
          {"min_hessian_eigenvalue", min_hessian_eigenvalue},
          {"hessians_psd", hessians_psd()},
          {"convexity_pairs", convexity_pairs},
          {"convexity_violations", convexity_violations},
          {"worst_convexity_gap", worst_convexity_gap},
          {"blr_convexity", blr_convexity.to_json()},
          {"mfvi_output_convexity", mfvi_output_convexity.to_json()},
          {"blr_uncertainty_ratio", blr_ratio},
          {"mfvi_output_uncertainty_ratio", mfvi_output_ratio},
          {"two_unit_max_mismatch", two_unit_max_mismatch},
          {"two_unit_fit_residual", {two_unit_residual.left, two_unit_residual.right}},
          {"all_pass", all_pass()}};
}

TheoryResult run_check_theory(const nlohmann::json& config, std::ostream& log) {
  TheoryResult out;
  Rng rng(config.value("seed", std::uint64_t{0}));
  const int networks = config.value("networks", 200);
  const int hidden = config.value("hidden", 20);
  const auto dims = config.value("input_dims", std::vector<int>{1, 2, 3});
  const int probes = config.value("probes_per_network", 10);
  const int segments = config.value("segments_per_network", 5);
  const int segment_points = config.value("segment_points", 41);

  out.networks = static_cast<std::size_t>(networks);
  out.min_hessian_eigenvalue = std::numeric_limits<double>::infinity();
  out.worst_convexity_gap = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < networks; ++k) {
    const int d = dims[static_cast<std::size_t>(k) % dims.size()];
    MfOutputLayer layer;
    layer.activation = Activation::Relu;
    layer.u.resize(hidden, d);
    for (Eigen::Index i = 0; i < layer.u.size(); ++i) layer.u.data()[i] = rng.normal();
    layer.v = rng.normal_vector(hidden);
    layer.w_mean = rng.normal_vector(hidden);
    layer.b_mean = rng.normal();
    layer.w_var.resize(hidden);
    for (int i = 0; i < hidden; ++i) layer.w_var[i] = std::exp(rng.normal());
    layer.b_var = rng.uniform(0.1, 1.0);
    for (int p = 0; p < probes; ++p) {
      const Vector x = 2.0 * rng.normal_vector(d);
      const VarianceHessian vh = variance_hessian(layer, x);
      if (vh.kink_proximity) ++out.kink_perturbations;
      ++out.hessian_probes;
      out.min_hessian_eigenvalue =
          std::min(out.min_hessian_eigenvalue, min_eigenvalue_symmetric(vh.h));
    }
    for (int s = 0; s < segments; ++s) {
      const Vector a = 2.0 * rng.normal_vector(d);
      const Vector b = 2.0 * rng.normal_vector(d);
      const ConvexityReport rep = convexity_probe(
          [&](const Vector& x) { return mf_output_variance(layer, x); }, a, b, segment_points);
      out.convexity_pairs += rep.pairs_checked;
      out.convexity_violations += rep.violations;
      out.worst_convexity_gap = std::max(out.worst_convexity_gap, rep.worst_violation);
    }
  }
  char line[200];
  std::snprintf(line, sizeof line,
                "theory: %zu Hessians, min eigenvalue %.3e; %zu midpoint pairs, %zu violations",
                out.hessian_probes, out.min_hessian_eigenvalue, out.convexity_pairs,
                out.convexity_violations);
  log_line(log, line);

  // BLR versus the mean-field output layer on the 1D task.
  const nlohmann::json bc = config.at("blr");
  const Dataset data = sine_from_config(bc);
  nlohmann::json settings_json = {{"method", "blr"},
                                  {"hidden", bc.value("hidden", std::vector<int>{50})},
                                  {"activation", bc.value("activation", std::string("relu"))},
                                  {"prior", bc.value("prior", std::string("fan_in"))},
                                  {"omega", bc.value("omega", 4.0)},
                                  {"epochs", bc.value("epochs", 20000)},
                                  {"batch_size", 0},
                                  {"learning_rate", bc.value("learning_rate", 0.001)},
                                  {"log_noise_var", 2.0 * std::log(bc.value("noise_std", 0.1))},
                                  {"trainable_noise", false}};
  const MethodSettings settings = MethodSettings::from_json(settings_json, 1);
  const FittedModel model = fit_model(settings, data, derive_seed(rng.next_u64(), "blr"));
  const BlrLastLayer& blr = *model.blr;
  const MfOutputLayer mf = mfvi_output_layer(blr);
  const Vector probe = probe_grid(bc.at("probe"));
  const Vector lo = probe.head(1), hi = probe.tail(1);
  const int n_probe = static_cast<int>(probe.size());
  out.blr_convexity = convexity_probe(
      [&](const Vector& x) { return blr.function_variance(x); }, lo, hi, n_probe);
  out.mfvi_output_convexity = convexity_probe(
      [&](const Vector& x) { return mf_output_variance(mf, x); }, lo, hi, n_probe);
  Vector blr_std(probe.size()), mf_std(probe.size());
  for (Eigen::Index i = 0; i < probe.size(); ++i) {
    const Vector x = probe.segment(i, 1);
    blr_std[i] = std::sqrt(blr.function_variance(x));
    mf_std[i] = std::sqrt(mf_output_variance(mf, x));
  }
  const auto data_regions = parse_intervals(bc.at("data_regions"));
  const auto gap_regions = parse_intervals(bc.at("gap_regions"));
  out.blr_ratio = uncertainty_ratio(probe, blr_std, data_regions, gap_regions);
  out.mfvi_output_ratio = uncertainty_ratio(probe, mf_std, data_regions, gap_regions);
  std::snprintf(line, sizeof line,
                "theory: BLR %zu midpoint violations (ratio %.2f); MFVI-output %zu (ratio %.2f)",
                out.blr_convexity.violations, out.blr_ratio, out.mfvi_output_convexity.violations,
                out.mfvi_output_ratio);
  log_line(log, line);

  // Two ReLU units: exact fit of one point on each side of both kinks.
  TwoUnitParams exact{0.5, 0.5, 1.0, 1.0, 0.25, -0.25, 0.0};
  out.two_unit_residual = fit_residual(exact, -1.0, 0.0, 1.0, 1.0);
  const int trials = config.value("two_unit_trials", 1000);
  for (int t = 0; t < trials; ++t) {
    TwoUnitParams p{rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0),
                    rng.uniform(0.1, 2.0), rng.normal(),          rng.normal(),
                    rng.normal()};
    const double x = rng.uniform(-5.0, 5.0);
    Vector xin(1);
    xin << x;
    const double f = forward(p.architecture(), p.theta(), xin)[0];
    out.two_unit_max_mismatch = std::max(out.two_unit_max_mismatch, std::abs(f - two_unit_piecewise(p, x)));
  }
  return out;
}

// ---------------------------------------------------------------- commands

namespace {

std::ostream& log_of(const CommandContext& ctx) { return ctx.log ? *ctx.log : std::cerr; }

}  // namespace

int cmd_synth1d(const CommandContext& ctx) {
  const auto config = resolve_section(ctx.preset, ctx.user_config, "synth1d", ctx.seed);
  const Synth1dResult result = run_synth1d(config, ctx.jobs, log_of(ctx));
  write_text(ctx.out_dir / "synth1d.svg", result.svg());
  write_text(ctx.out_dir / "synth1d_report.json", result.report().dump(1) + "\n");
  return 0;
}

int cmd_bench(const CommandContext& ctx) {
  const auto config = resolve_section(ctx.preset, ctx.user_config, "bench", ctx.seed);
  std::optional<fs::path> ckpt;
  if (config.value("save_checkpoints", false)) ckpt = ctx.out_dir / "checkpoints";
  const BenchResult result = run_bench(config, data_dir_from_env(), ctx.jobs, log_of(ctx),
                                       ctx.out_dir / "manifests", ckpt);
  std::string records, timing;
  for (const auto& r : result.records) {
    records += r.to_json().dump() + "\n";
    nlohmann::ordered_json t;
    t["dataset"] = r.dataset;
    t["label"] = r.label;
    t["split_id"] = r.split_id;
    t["wall_time"] = r.wall_time;
    timing += t.dump() + "\n";
  }
  write_text(ctx.out_dir / "records.jsonl", records);
  write_text(ctx.out_dir / "timing.jsonl", timing);
  write_text(ctx.out_dir / "summary.csv", result.summary_csv());
  log_of(ctx) << result.summary_csv();
  return 0;
}

int cmd_splits(const CommandContext& ctx, const std::string& dataset, SplitKind kind, bool check) {
  const auto config = resolve_section(ctx.preset, ctx.user_config, "splits", ctx.seed);
  const fs::path dir = data_dir_from_env();
  const Dataset data = load_named_dataset(dir, dataset);
  const auto manifests = make_splits(data, kind, config);
  for (std::size_t s = 0; s < manifests.size(); ++s) {
    const auto& m = manifests[s];
    const int id = m.dimension ? *m.dimension : static_cast<int>(s);
    write_text(ctx.out_dir / dataset / (to_string(kind) + "_" + two_digits(id) + ".json"),
               m.serialize());
  }
  log_of(ctx) << "wrote " << manifests.size() << " " << to_string(kind) << " manifests for "
              << dataset << '\n';
  if (check) {
    if (kind != SplitKind::Gap) throw ConfigError("--check compares gap manifests only");
    const auto bad = check_golden(data, dir);
    for (const auto& b : bad) log_of(ctx) << "golden mismatch: " << b << '\n';
    return bad.empty() ? 0 : 1;
  }
  return 0;
}

int cmd_check_theory(const CommandContext& ctx) {
  const auto config = resolve_section(ctx.preset, ctx.user_config, "check_theory", ctx.seed);
  const TheoryResult result = run_check_theory(config, log_of(ctx));
  write_text(ctx.out_dir / "check_theory.json", result.report().dump(1) + "\n");
  log_of(ctx) << (result.all_pass() ? "check-theory: all pass" : "check-theory: FAILED") << '\n';
  return result.all_pass() ? 0 : 1;
}

int cmd_plot(const CommandContext& ctx, const fs::path& records_path) {
  const auto config = resolve_section(ctx.preset, ctx.user_config, "plot", ctx.seed);
  BenchResult result;
  result.records = read_records(records_path);
  for (const auto& r : result.records) {
    if (std::find(result.labels.begin(), result.labels.end(), r.label) == result.labels.end()) {
      result.labels.push_back(r.label);
    }
    if (std::find(result.datasets.begin(), result.datasets.end(), r.dataset) ==
        result.datasets.end()) {
      result.datasets.push_back(r.dataset);
    }
  }
  std::vector<svg::BarGroup> groups;
  for (const auto& d : result.datasets) {
    svg::BarGroup g{d, {}, {}};
    for (const auto& label : result.labels) {
      const SummaryCell c = result.cell(label, d);
      g.mean.push_back(c.n ? c.mean : NAN);
      g.stderr_.push_back(c.stderr_);
    }
    groups.push_back(std::move(g));
  }
  write_text(ctx.out_dir / "test_ll_bars.svg",
             svg::bar_plot("Average test log-likelihood", result.labels, groups));

  std::vector<std::pair<std::string, std::string>> pairs;
  if (config.contains("pairs")) {
    pairs = config.at("pairs").get<std::vector<std::pair<std::string, std::string>>>();
  } else {
    for (std::size_t a = 0; a < result.labels.size(); ++a) {
      for (std::size_t b = a + 1; b < result.labels.size(); ++b) {
        pairs.emplace_back(result.labels[a], result.labels[b]);
      }
    }
  }
  int written = 1;
  for (const auto& d : result.datasets) {
    for (const auto& [la, lb] : pairs) {
      std::map<std::pair<std::string, int>, double> a_ll;
      for (const auto& r : result.records) {
        if (r.dataset == d && r.label == la && r.status == "ok") {
          a_ll[{r.split_kind, r.split_id}] = r.test_ll;
        }
      }
      std::vector<double> xs, ys;
      for (const auto& r : result.records) {
        if (r.dataset != d || r.label != lb || r.status != "ok") continue;
        auto it = a_ll.find({r.split_kind, r.split_id});
        if (it == a_ll.end()) continue;
        xs.push_back(it->second);
        ys.push_back(r.test_ll);
      }
      if (xs.empty()) continue;
      write_text(ctx.out_dir / ("pair_" + d + "_" + la + "_vs_" + lb + ".svg"),
                 svg::pair_plot(la, lb, xs, ys));
      ++written;
    }
  }
  log_of(ctx) << "wrote " << written << " plots to " << ctx.out_dir.string() << '\n';
  return 0;
}

int cmd_eval(const CommandContext& ctx, const fs::path& checkpoint, const fs::path& csv,
             const std::optional<fs::path>& manifest) {
  const auto config = resolve_section(ctx.preset, ctx.user_config, "eval", ctx.seed);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const FittedModel model = model_from_checkpoint(ckpt, config.value("eval_samples", 100));
  CsvSchema schema;
  const fs::path schema_path = fs::path(csv).replace_extension(".json");
  if (fs::exists(schema_path)) schema = load_schema(schema_path);
  const Dataset data = load_csv(csv, schema);
  Dataset test = data;
  if (manifest) {
    const SplitManifest m = load_manifest(*manifest);
    m.validate(static_cast<std::size_t>(data.size()));
    if (!m.dataset_hash.empty() && m.dataset_hash != data.content_hash) {
      throw ConfigError("manifest was made for a different dataset file");
    }
    test = data.subset(m.test);
  }
  Dataset scaled = ckpt.normalizer ? ckpt.normalizer->normalize(test) : test;
  const Evaluation ev = evaluate_model(model, scaled.x, scaled.y.col(0),
                                       config.value("seed", std::uint64_t{0}));
  double correction = ckpt.normalizer ? ckpt.normalizer->ll_unit_correction() : 0.0;
  Matrix pred = ev.mean;
  if (ckpt.normalizer) pred = ckpt.normalizer->denormalize_y(pred);
  nlohmann::ordered_json report;
  report["checkpoint"] = checkpoint.string();
  report["method"] = ckpt.method;
  report["n"] = test.size();
  report["test_ll"] = ev.log_lik.mean() + correction;
  report["test_rmse"] =
      std::sqrt((pred.col(0) - test.y.col(0)).squaredNorm() / static_cast<double>(test.size()));
  write_text(ctx.out_dir / "eval.json", report.dump(1) + "\n");
  std::cout << report.dump() << '\n';
  return 0;
}

}  // namespace ibnn
