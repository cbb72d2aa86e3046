#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gapgc/engine.hpp"
#include "gapgc/generator.hpp"

namespace gapgc {

// Flat experiment configuration, mirrored 1:1 by a flat JSON document.
// Every field has a usable default; unknown JSON keys are rejected.
struct ExperimentConfig {
  // Data source: generated per seed unless dataset_path names a directory
  // previously written by write_dataset().
  std::string dataset_path;
  std::size_t n_graphs = 2000;
  std::size_t task_count = 2;
  int train_size_min = 10;
  int train_size_max = 20;
  int test_size_min = 24;
  int test_size_max = 40;
  std::string train_attach = "uniform";
  std::string test_attach = "preferential";
  // Model.
  std::size_t num_layers = 5;
  std::size_t hidden_dim = 64;
  double dropout = 0.0;
  // Offline training.
  std::size_t train_epochs = 20;
  double train_lr = 1e-3;
  double train_weight_decay = 0.0;
  std::size_t train_batch_size = 32;
  // Adaptation.
  std::string method = "gapgc";
  double lambda = 1.0;
  double gamma = 0.8;
  double tau_start = 0.5;
  double tau_end = 0.1;
  double tta_lr = 1e-3;
  double tta_weight_decay = 0.0;
  std::size_t tta_batch_size = 64;
  std::size_t tta_epochs = 1;
  std::size_t theta_steps = 1;
  std::size_t phi_steps = 1;
  bool use_ala = true;
  bool use_gpps = true;
  bool freeze_aug_encoder = false;
  double shot_beta = 0.3;
  double drop_keep_prob = 0.8;
  double bn_rho = 0.0;
  // Harness.
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string out_dir = "results";
};

// Strict parse: every key must be a known field of the matching JSON type;
// the first unknown key raises ConfigError naming it. Missing keys keep
// their defaults. load_experiment_config reads the document from disk.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

void validate_experiment_config(const ExperimentConfig& config);

// Sorted-key compact JSON rendering of every experiment-defining field (all
// but out_dir, which only says where results land); the hash input.
std::string canonical_config_json(const ExperimentConfig& config);

// 64-bit FNV-1a of the canonical rendering, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

TTAConfig tta_from_experiment(const ExperimentConfig& config, std::uint64_t seed);
GinConfig gin_from_experiment(const ExperimentConfig& config, std::size_t feature_width,
                              std::size_t task_count);
ShiftProfile profile_from_experiment(const ExperimentConfig& config);

// One CSV line of the standard results schema. A failed cell carries
// auc = NaN (serialized "nan"); the reason lands in the errors list and,
// on disk, in errors.log next to the CSV.
struct ResultRow {
  std::string method;   // method name or ablation/probe cell label
  std::string seed;     // decimal seed, or "mean" for cross-seed summaries
  std::string split = "test";
  std::string task_id;  // task index or "mean"
  double auc = 0.0;
  long long wall_ms = 0;
  std::string config_hash;
};

// One line of the plot-ready fraction-sweep CSV.
struct SweepRow {
  std::string method;
  std::string seed;
  double fraction = 1.0;
  double auc = 0.0;
  long long wall_ms = 0;
  std::string config_hash;
};

// One seed's dataset and trained, validation-selected model. Reused across
// all cells that share the seed (ablation arms, sweep fractions, probe
// conditions) so comparisons are controlled.
struct SeedContext {
  GeneratedDataset data;
  ModelBundle bundle;
  TrainLog train_log;
};

// Keyed by seed; entries assume the data/model/training fields of the config
// they were built with, so share a cache only across configs that differ in
// adaptation fields alone.
using SeedCache = std::map<std::uint64_t, SeedContext>;

SeedContext& ensure_seed(SeedCache& cache, const ExperimentConfig& config,
                         std::uint64_t seed);

// The order adaptation consumes the test split in: a fixed per-seed shuffle,
// shared by every operation so fraction prefixes nest and full-fraction runs
// reproduce plain runs exactly.
std::vector<int> adaptation_stream(const std::vector<int>& test_idx, std::uint64_t seed);

struct ExperimentOutcome {
  std::vector<ResultRow> rows;
  std::vector<std::string> errors;   // one line per failed cell
  std::vector<std::string> notices;  // skips and other non-fatal conditions
};

struct SweepOutcome {
  std::vector<SweepRow> rows;
  std::vector<std::string> errors;
};

// Per seed: data -> offline training -> adaptation of config.method on the
// test stream -> AUC of the adapted model on the full test split. Emits
// per-task rows plus a task_id = "mean" row per seed, writes
// <out_dir>/results.csv, and keeps going when a cell fails.
ExperimentOutcome run_experiment(const ExperimentConfig& config, SeedCache* cache = nullptr);

// The five-cell matrix {baseline, w/Both, w/o ALA, w/o GPPS, w/o Both} per
// seed from one shared checkpoint, plus seed = "mean" summary rows. Requires
// method gapgc. Writes <out_dir>/ablation.csv.
ExperimentOutcome run_ablation(const ExperimentConfig& config, SeedCache* cache = nullptr);

// For each fraction f (ascending, each in (0, 1]): adapt on the first
// ceil(f * |test|) graphs of the per-seed stream, evaluate on the full test
// split. Writes <out_dir>/sweep.csv.
SweepOutcome sweep_fraction(const ExperimentConfig& config,
                            const std::vector<double>& fractions,
                            SeedCache* cache = nullptr);

// Confidence-bias diagnostic: tent adapted on all test graphs ("tent_all") vs
// tent adapted only on graphs whose pseudo-label disagrees with the true
// label on some present task ("tent_false_subset"); both conditions start
// from the shared checkpoint and are scored on the full test split. An empty
// false subset skips that condition with a notice. Requires method tent.
// Writes <out_dir>/probe.csv.
ExperimentOutcome false_pseudo_label_probe(const ExperimentConfig& config,
                                           SeedCache* cache = nullptr);

// CSV emission: mandatory header, fixed column order, atomic replace via a
// temp file; when the target already exists its data rows are preserved and
// the new rows appended.
void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

constexpr const char* kResultsCsvHeader = "method,seed,split,task_id,auc,wall_ms,config_hash";
constexpr const char* kSweepCsvHeader = "method,seed,fraction,auc,wall_ms,config_hash";

}  // namespace gapgc
