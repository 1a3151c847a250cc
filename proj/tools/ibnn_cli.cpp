#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ibnn/experiments.hpp"

namespace {

nlohmann::json read_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw ibnn::ConfigError("cannot open config " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ibnn::ConfigError("config " + path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximate inference for small Bayesian neural networks"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, preset = "paper", out_dir = ".";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  app.add_option("--config", config_path, "JSON file merged over the preset, keyed by command");
  app.add_option("--seed", seed, "Override the base seed");
  app.add_option("--out-dir", out_dir, "Directory for outputs")->capture_default_str();
  app.add_option("--preset", preset, "Hyperparameter preset")
      ->check(CLI::IsMember({"paper", "mini"}))
      ->capture_default_str();
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  auto* synth1d = app.add_subcommand("synth1d", "1D in-between uncertainty experiment");
  auto* bench = app.add_subcommand("bench", "UCI benchmark with grid search");

  auto* splits = app.add_subcommand("splits", "Write split manifests for a dataset");
  std::string split_dataset, split_kind = "gap";
  bool check = false;
  splits->add_option("dataset", split_dataset, "Dataset name in IBNN_DATA_DIR")->required();
  splits->add_option("--kind", split_kind)->check(CLI::IsMember({"gap", "standard"}))
      ->capture_default_str();
  splits->add_flag("--check", check, "Compare gap manifests with the golden files");

  auto* theory = app.add_subcommand("check-theory", "Convex-variance and two-unit checks");

  auto* plot = app.add_subcommand("plot", "Bar and pair plots from bench records");
  std::string records;
  plot->add_option("records", records, "records.jsonl from bench")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Evaluate a saved posterior on a CSV file");
  std::string checkpoint, csv;
  std::optional<std::string> manifest;
  eval->add_option("checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("csv", csv)->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", manifest, "Evaluate on the test rows of this split");

  CLI11_PARSE(app, argc, argv);

  try {
    ibnn::CommandContext ctx;
    ctx.preset = ibnn::load_preset(preset);
    ctx.user_config = read_config(config_path);
    ctx.seed = seed;
    ctx.out_dir = out_dir;
    ctx.jobs = jobs;
    ctx.log = &std::cerr;
    std::filesystem::create_directories(ctx.out_dir);

    if (*synth1d) return ibnn::cmd_synth1d(ctx);
    if (*bench) return ibnn::cmd_bench(ctx);
    if (*splits) {
      return ibnn::cmd_splits(ctx, split_dataset, ibnn::split_kind_from_string(split_kind), check);
    }
    if (*theory) return ibnn::cmd_check_theory(ctx);
    if (*plot) return ibnn::cmd_plot(ctx, records);
    if (*eval) {
      std::optional<std::filesystem::path> m;
      if (manifest) m = *manifest;
      return ibnn::cmd_eval(ctx, checkpoint, csv, m);
    }
  } catch (const ibnn::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
