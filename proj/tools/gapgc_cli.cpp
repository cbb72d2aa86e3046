// Command-line front end for dataset generation, offline training, test-time
// adaptation runs, the ablation matrix, the test-fraction sweep and the
// false-pseudo-label diagnostic.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gapgc/error.hpp"
#include "gapgc/experiment.hpp"

namespace fs = std::filesystem;
using namespace gapgc;

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    try {
      seeds.push_back(std::stoull(token));
    } catch (const std::exception&) {
      throw ConfigError("--seed expects comma-separated non-negative integers, got '" +
                        token + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("--seed produced an empty list");
  return seeds;
}

std::vector<double> parse_fraction_list(const std::string& text) {
  std::vector<double> fractions;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    try {
      fractions.push_back(std::stod(token));
    } catch (const std::exception&) {
      throw ConfigError("--fractions expects comma-separated numbers, got '" + token +
                        "'");
    }
  }
  return fractions;
}

struct CommonFlags {
  std::string config_path;
  std::string seed_list;
  std::string out_dir;
  std::string method;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Path to a flat JSON config");
  cmd->add_option("--seed", flags.seed_list, "Comma-separated seed list override");
  cmd->add_option("--out", flags.out_dir, "Output directory override");
  cmd->add_option("--method", flags.method, "Adaptation method override");
}

ExperimentConfig resolve_config(const CommonFlags& flags) {
  ExperimentConfig config = flags.config_path.empty()
                                ? parse_experiment_config("{}")
                                : load_experiment_config(flags.config_path);
  if (!flags.seed_list.empty()) config.seeds = parse_seed_list(flags.seed_list);
  if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
  if (!flags.method.empty()) config.method = flags.method;
  validate_experiment_config(config);
  return config;
}

void print_outcome(const ExperimentOutcome& outcome) {
  std::printf("%-18s %-6s %-10s %s\n", "method", "seed", "auc", "wall_ms");
  for (const auto& row : outcome.rows) {
    if (row.task_id != "mean") continue;
    std::printf("%-18s %-6s %-10.4f %lld\n", row.method.c_str(), row.seed.c_str(),
                row.auc, row.wall_ms);
  }
  for (const auto& notice : outcome.notices) std::printf("notice: %s\n", notice.c_str());
  for (const auto& error : outcome.errors) std::printf("error: %s\n", error.c_str());
}

void run_generate(const CommonFlags& flags) {
  const ExperimentConfig config = resolve_config(flags);
  const std::uint64_t seed = config.seeds.front();
  const GeneratedDataset data = generate_motif_ood_dataset(
      seed, config.n_graphs, profile_from_experiment(config), config.task_count);
  const fs::path dir = fs::path(config.out_dir) / "dataset";
  write_dataset(dir.string(), data);
  std::printf("wrote %zu graphs (T=%zu, F=%zu, seed %llu) to %s\n", data.graphs.size(),
              data.task_count, data.feature_width,
              static_cast<unsigned long long>(seed), dir.string().c_str());
  std::printf("split: %zu train / %zu validation / %zu test\n", data.split.train.size(),
              data.split.validation.size(), data.split.test.size());
}

void run_train(const CommonFlags& flags) {
  const ExperimentConfig config = resolve_config(flags);
  SeedCache cache;
  fs::create_directories(config.out_dir);
  for (std::uint64_t seed : config.seeds) {
    const SeedContext& ctx = ensure_seed(cache, config, seed);
    const fs::path path =
        fs::path(config.out_dir) / ("checkpoint_seed" + std::to_string(seed) + ".json");
    save_checkpoint(path.string(), ctx.bundle);
    const double last_val =
        ctx.train_log.val_auc.empty() ? 0.0 : ctx.train_log.val_auc.back();
    std::printf("seed %llu: initial loss %.4f, best epoch %zu, last val AUC %.4f -> %s\n",
                static_cast<unsigned long long>(seed), ctx.train_log.initial_loss,
                ctx.train_log.best_epoch, last_val, path.string().c_str());
  }
}

void run_adapt(const CommonFlags& flags) {
  const ExperimentConfig config = resolve_config(flags);
  print_outcome(run_experiment(config));
  std::printf("wrote %s\n", (fs::path(config.out_dir) / "results.csv").string().c_str());
}

void run_eval(const CommonFlags& flags) {
  CommonFlags forced = flags;
  forced.method = "none";
  const ExperimentConfig config = resolve_config(forced);
  print_outcome(run_experiment(config));
  std::printf("wrote %s\n", (fs::path(config.out_dir) / "results.csv").string().c_str());
}

void run_ablate(const CommonFlags& flags) {
  const ExperimentConfig config = resolve_config(flags);
  print_outcome(run_ablation(config));
  std::printf("wrote %s\n", (fs::path(config.out_dir) / "ablation.csv").string().c_str());
}

void run_sweep(const CommonFlags& flags, const std::string& fraction_list) {
  const ExperimentConfig config = resolve_config(flags);
  const SweepOutcome outcome = sweep_fraction(config, parse_fraction_list(fraction_list));
  std::printf("%-18s %-6s %-10s %-10s %s\n", "method", "seed", "fraction", "auc",
              "wall_ms");
  for (const auto& row : outcome.rows) {
    std::printf("%-18s %-6s %-10.3f %-10.4f %lld\n", row.method.c_str(), row.seed.c_str(),
                row.fraction, row.auc, row.wall_ms);
  }
  for (const auto& error : outcome.errors) std::printf("error: %s\n", error.c_str());
  std::printf("wrote %s\n", (fs::path(config.out_dir) / "sweep.csv").string().c_str());
}

void run_probe(const CommonFlags& flags) {
  CommonFlags forced = flags;
  if (forced.method.empty()) forced.method = "tent";
  const ExperimentConfig config = resolve_config(forced);
  print_outcome(false_pseudo_label_probe(config));
  std::printf("wrote %s\n", (fs::path(config.out_dir) / "probe.csv").string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GAPGC test-time adaptation toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string fraction_list = "0.25,0.5,0.75,1.0";

  CLI::App* generate = app.add_subcommand("generate-data",
                                          "Write a synthetic motif-OOD dataset");
  add_common_flags(generate, flags);

  CLI::App* train = app.add_subcommand("train", "Offline-train one model per seed");
  add_common_flags(train, flags);

  CLI::App* adapt = app.add_subcommand(
      "adapt", "Train, adapt with the configured method, evaluate");
  add_common_flags(adapt, flags);

  CLI::App* eval = app.add_subcommand("eval", "Train and evaluate without adaptation");
  add_common_flags(eval, flags);

  CLI::App* ablate = app.add_subcommand("ablate", "Run the five-cell ablation matrix");
  add_common_flags(ablate, flags);

  CLI::App* sweep = app.add_subcommand("sweep-fraction",
                                       "AUC as a function of adaptation-set size");
  add_common_flags(sweep, flags);
  sweep->add_option("--fractions", fraction_list,
                    "Comma-separated fractions in (0,1], ascending");

  CLI::App* probe = app.add_subcommand("probe-false-labels",
                                       "Tent on all vs only false-pseudo-label graphs");
  add_common_flags(probe, flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) run_generate(flags);
    if (train->parsed()) run_train(flags);
    if (adapt->parsed()) run_adapt(flags);
    if (eval->parsed()) run_eval(flags);
    if (ablate->parsed()) run_ablate(flags);
    if (sweep->parsed()) run_sweep(flags, fraction_list);
    if (probe->parsed()) run_probe(flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
