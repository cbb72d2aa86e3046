#include "gapgc/experiment.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "gapgc/error.hpp"
#include "gapgc/loss.hpp"
#include "gapgc/rng.hpp"

namespace gapgc {
namespace {

using json = nlohmann::json;

constexpr std::uint64_t kStreamShuffleTag = 0xF8AC;

long long elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now() - start)
      .count();
}

// One setter per known key; anything else is rejected by name.
struct FieldReaders {
  std::map<std::string, std::function<void(ExperimentConfig&, const json&)>> by_key;
};

template <typename T>
T read_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::size_t read_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0)) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

const FieldReaders& field_readers() {
  static const FieldReaders readers = [] {
    FieldReaders r;
    auto& m = r.by_key;
    m["dataset_path"] = [](ExperimentConfig& c, const json& v) {
      c.dataset_path = read_as<std::string>(v, "dataset_path");
    };
    m["n_graphs"] = [](ExperimentConfig& c, const json& v) {
      c.n_graphs = read_count(v, "n_graphs");
    };
    m["task_count"] = [](ExperimentConfig& c, const json& v) {
      c.task_count = read_count(v, "task_count");
    };
    m["train_size_min"] = [](ExperimentConfig& c, const json& v) {
      c.train_size_min = read_as<int>(v, "train_size_min");
    };
    m["train_size_max"] = [](ExperimentConfig& c, const json& v) {
      c.train_size_max = read_as<int>(v, "train_size_max");
    };
    m["test_size_min"] = [](ExperimentConfig& c, const json& v) {
      c.test_size_min = read_as<int>(v, "test_size_min");
    };
    m["test_size_max"] = [](ExperimentConfig& c, const json& v) {
      c.test_size_max = read_as<int>(v, "test_size_max");
    };
    m["train_attach"] = [](ExperimentConfig& c, const json& v) {
      c.train_attach = read_as<std::string>(v, "train_attach");
    };
    m["test_attach"] = [](ExperimentConfig& c, const json& v) {
      c.test_attach = read_as<std::string>(v, "test_attach");
    };
    m["num_layers"] = [](ExperimentConfig& c, const json& v) {
      c.num_layers = read_count(v, "num_layers");
    };
    m["hidden_dim"] = [](ExperimentConfig& c, const json& v) {
      c.hidden_dim = read_count(v, "hidden_dim");
    };
    m["dropout"] = [](ExperimentConfig& c, const json& v) {
      c.dropout = read_as<double>(v, "dropout");
    };
    m["train_epochs"] = [](ExperimentConfig& c, const json& v) {
      c.train_epochs = read_count(v, "train_epochs");
    };
    m["train_lr"] = [](ExperimentConfig& c, const json& v) {
      c.train_lr = read_as<double>(v, "train_lr");
    };
    m["train_weight_decay"] = [](ExperimentConfig& c, const json& v) {
      c.train_weight_decay = read_as<double>(v, "train_weight_decay");
    };
    m["train_batch_size"] = [](ExperimentConfig& c, const json& v) {
      c.train_batch_size = read_count(v, "train_batch_size");
    };
    m["method"] = [](ExperimentConfig& c, const json& v) {
      c.method = read_as<std::string>(v, "method");
    };
    m["lambda"] = [](ExperimentConfig& c, const json& v) {
      c.lambda = read_as<double>(v, "lambda");
    };
    m["gamma"] = [](ExperimentConfig& c, const json& v) {
      c.gamma = read_as<double>(v, "gamma");
    };
    m["tau_start"] = [](ExperimentConfig& c, const json& v) {
      c.tau_start = read_as<double>(v, "tau_start");
    };
    m["tau_end"] = [](ExperimentConfig& c, const json& v) {
      c.tau_end = read_as<double>(v, "tau_end");
    };
    m["tta_lr"] = [](ExperimentConfig& c, const json& v) {
      c.tta_lr = read_as<double>(v, "tta_lr");
    };
    m["tta_weight_decay"] = [](ExperimentConfig& c, const json& v) {
      c.tta_weight_decay = read_as<double>(v, "tta_weight_decay");
    };
    m["tta_batch_size"] = [](ExperimentConfig& c, const json& v) {
      c.tta_batch_size = read_count(v, "tta_batch_size");
    };
    m["tta_epochs"] = [](ExperimentConfig& c, const json& v) {
      c.tta_epochs = read_count(v, "tta_epochs");
    };
    m["theta_steps"] = [](ExperimentConfig& c, const json& v) {
      c.theta_steps = read_count(v, "theta_steps");
    };
    m["phi_steps"] = [](ExperimentConfig& c, const json& v) {
      c.phi_steps = read_count(v, "phi_steps");
    };
    m["use_ala"] = [](ExperimentConfig& c, const json& v) {
      c.use_ala = read_as<bool>(v, "use_ala");
    };
    m["use_gpps"] = [](ExperimentConfig& c, const json& v) {
      c.use_gpps = read_as<bool>(v, "use_gpps");
    };
    m["freeze_aug_encoder"] = [](ExperimentConfig& c, const json& v) {
      c.freeze_aug_encoder = read_as<bool>(v, "freeze_aug_encoder");
    };
    m["shot_beta"] = [](ExperimentConfig& c, const json& v) {
      c.shot_beta = read_as<double>(v, "shot_beta");
    };
    m["drop_keep_prob"] = [](ExperimentConfig& c, const json& v) {
      c.drop_keep_prob = read_as<double>(v, "drop_keep_prob");
    };
    m["bn_rho"] = [](ExperimentConfig& c, const json& v) {
      c.bn_rho = read_as<double>(v, "bn_rho");
    };
    m["seeds"] = [](ExperimentConfig& c, const json& v) {
      if (!v.is_array()) throw ConfigError("config key 'seeds' must be an array");
      c.seeds.clear();
      for (const auto& s : v) {
        if (!s.is_number_integer() || s.get<long long>() < 0) {
          throw ConfigError("config key 'seeds' must hold non-negative integers");
        }
        c.seeds.push_back(s.get<std::uint64_t>());
      }
    };
    m["out_dir"] = [](ExperimentConfig& c, const json& v) {
      c.out_dir = read_as<std::string>(v, "out_dir");
    };
    return r;
  }();
  return readers;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Atomic emit: existing data rows (if any) survive, new lines follow, and
// the file appears in one rename.
void write_csv_atomic(const std::string& path, const std::string& header,
                      const std::vector<std::string>& lines) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());

  std::string body = header + "\n";
  if (fs::exists(target)) {
    std::ifstream in(target);
    if (!in) throw ParseError("write_csv: cannot read existing " + path);
    std::string line;
    if (!std::getline(in, line)) {
      // empty file: keep just the fresh header
    } else if (line != header) {
      throw ParseError("write_csv: " + path + " has a mismatched header");
    }
    while (std::getline(in, line)) body += line + "\n";
  }
  for (const auto& line : lines) body += line + "\n";

  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw ParseError("write_csv: cannot open " + tmp.string());
    out << body;
  }
  fs::rename(tmp, target);
}

void append_errors_log(const std::string& out_dir, const std::vector<std::string>& errors,
                       const std::vector<std::string>& notices) {
  if (errors.empty() && notices.empty()) return;
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ofstream log(fs::path(out_dir) / "errors.log", std::ios::app);
  for (const auto& e : errors) log << "error: " << e << "\n";
  for (const auto& n : notices) log << "notice: " << n << "\n";
}

ResultRow make_row(const std::string& method, const std::string& seed,
                   const std::string& task_id, double auc, long long wall_ms,
                   const std::string& hash) {
  ResultRow row;
  row.method = method;
  row.seed = seed;
  row.task_id = task_id;
  row.auc = auc;
  row.wall_ms = wall_ms;
  row.config_hash = hash;
  return row;
}

// Per-task rows plus the mean row for one evaluated cell.
void push_auc_rows(std::vector<ResultRow>& rows, const std::string& method,
                   std::uint64_t seed, const AucResult& auc, long long wall_ms,
                   const std::string& hash) {
  const std::string seed_str = std::to_string(seed);
  for (std::size_t t = 0; t < auc.per_task.size(); ++t) {
    if (!auc.computed[t]) continue;
    rows.push_back(make_row(method, seed_str, std::to_string(t), auc.per_task[t],
                            wall_ms, hash));
  }
  rows.push_back(make_row(method, seed_str, "mean", auc.mean, wall_ms, hash));
}

// Adapt a clone of the seed's checkpoint on `stream` and score the full test
// split. The TTAConfig override hook lets ablation arms flip flags.
struct CellResult {
  AucResult auc;
  long long wall_ms = 0;
};

CellResult run_cell(const SeedContext& ctx, const ExperimentConfig& config,
                    std::uint64_t seed, const std::vector<int>& stream,
                    const std::function<void(TTAConfig&)>& tweak = {}) {
  const auto start = std::chrono::steady_clock::now();
  ModelBundle adapted = ctx.bundle;
  TTAConfig tta = tta_from_experiment(config, seed);
  if (tweak) tweak(tta);
  run_adaptation(adapted, ctx.data.graphs, stream, tta);
  CellResult cell;
  cell.auc = evaluate_auc(adapted, ctx.data.graphs, ctx.data.split.test,
                          config.tta_batch_size);
  cell.wall_ms = elapsed_ms(start);
  return cell;
}

// Eval-mode pseudo-labels for the given graphs, aligned with `indices`.
std::vector<PseudoLabel> eval_pseudo_labels(ModelBundle& bundle,
                                            const std::vector<Graph>& graphs,
                                            const std::vector<int>& indices,
                                            std::size_t batch_size) {
  std::vector<PseudoLabel> out;
  out.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); i += batch_size) {
    const std::size_t hi = std::min(indices.size(), i + batch_size);
    std::vector<int> chunk(indices.begin() + i, indices.begin() + hi);
    GraphBatch batch = batch_graphs(graphs, chunk);
    Tape tape;
    bundle.params.set_all_trainable(false);
    BoundParams bound(tape, bundle.params);
    EncodeOptions opts;
    opts.bn_mode = BnMode::eval;
    Tensor logits = forward_logits(tape, bound, bundle, batch, opts);
    for (auto& label : pseudo_label(logits)) out.push_back(std::move(label));
  }
  return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");

  ExperimentConfig config;
  const auto& readers = field_readers().by_key;
  for (const auto& [key, value] : doc.items()) {
    auto it = readers.find(key);
    if (it == readers.end()) throw ConfigError("unknown config key: " + key);
    it->second(config, value);
  }
  validate_experiment_config(config);
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

void validate_experiment_config(const ExperimentConfig& c) {
  if (c.seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (c.n_graphs < 10 && c.dataset_path.empty()) {
    throw ConfigError("n_graphs must be at least 10");
  }
  if (c.task_count < 1) throw ConfigError("task_count must be at least 1");
  if (c.num_layers < 1) throw ConfigError("num_layers must be at least 1");
  if (c.hidden_dim < 1) throw ConfigError("hidden_dim must be at least 1");
  if (c.dropout < 0.0 || c.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (c.train_epochs < 1) throw ConfigError("train_epochs must be at least 1");
  if (c.train_lr <= 0.0) throw ConfigError("train_lr must be positive");
  if (c.train_batch_size < 2) throw ConfigError("train_batch_size must be at least 2");
  if (c.tta_batch_size < 1) throw ConfigError("tta_batch_size must be at least 1");
  method_from_name(c.method);             // rejects unknown methods
  attach_style_from_name(c.train_attach); // rejects unknown styles
  attach_style_from_name(c.test_attach);
  if (c.train_size_min < 2 || c.train_size_min > c.train_size_max) {
    throw ConfigError("train size range must satisfy 2 <= min <= max");
  }
  if (c.test_size_min < 2 || c.test_size_min > c.test_size_max) {
    throw ConfigError("test size range must satisfy 2 <= min <= max");
  }
  // Adaptation-field ranges share the TTAConfig rules.
  validate_tta_config(tta_from_experiment(c, c.seeds.front()));
}

std::string canonical_config_json(const ExperimentConfig& c) {
  json doc;  // nlohmann objects iterate in sorted key order
  doc["dataset_path"] = c.dataset_path;
  doc["n_graphs"] = c.n_graphs;
  doc["task_count"] = c.task_count;
  doc["train_size_min"] = c.train_size_min;
  doc["train_size_max"] = c.train_size_max;
  doc["test_size_min"] = c.test_size_min;
  doc["test_size_max"] = c.test_size_max;
  doc["train_attach"] = c.train_attach;
  doc["test_attach"] = c.test_attach;
  doc["num_layers"] = c.num_layers;
  doc["hidden_dim"] = c.hidden_dim;
  doc["dropout"] = c.dropout;
  doc["train_epochs"] = c.train_epochs;
  doc["train_lr"] = c.train_lr;
  doc["train_weight_decay"] = c.train_weight_decay;
  doc["train_batch_size"] = c.train_batch_size;
  doc["method"] = c.method;
  doc["lambda"] = c.lambda;
  doc["gamma"] = c.gamma;
  doc["tau_start"] = c.tau_start;
  doc["tau_end"] = c.tau_end;
  doc["tta_lr"] = c.tta_lr;
  doc["tta_weight_decay"] = c.tta_weight_decay;
  doc["tta_batch_size"] = c.tta_batch_size;
  doc["tta_epochs"] = c.tta_epochs;
  doc["theta_steps"] = c.theta_steps;
  doc["phi_steps"] = c.phi_steps;
  doc["use_ala"] = c.use_ala;
  doc["use_gpps"] = c.use_gpps;
  doc["freeze_aug_encoder"] = c.freeze_aug_encoder;
  doc["shot_beta"] = c.shot_beta;
  doc["drop_keep_prob"] = c.drop_keep_prob;
  doc["bn_rho"] = c.bn_rho;
  doc["seeds"] = c.seeds;
  // out_dir is where results land, not part of the experiment's identity:
  // the same run written elsewhere must carry the same hash.
  return doc.dump();
}

std::string config_hash(const ExperimentConfig& c) {
  const std::string text = canonical_config_json(c);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char byte : text) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TTAConfig tta_from_experiment(const ExperimentConfig& c, std::uint64_t seed) {
  TTAConfig tta;
  tta.method = method_from_name(c.method);
  tta.lambda = c.lambda;
  tta.gamma = c.gamma;
  tta.tau_start = c.tau_start;
  tta.tau_end = c.tau_end;
  tta.lr = c.tta_lr;
  tta.weight_decay = c.tta_weight_decay;
  tta.batch_size = c.tta_batch_size;
  tta.tta_epochs = c.tta_epochs;
  tta.theta_steps = c.theta_steps;
  tta.phi_steps = c.phi_steps;
  tta.seed = seed;
  tta.use_ala = c.use_ala;
  tta.use_gpps = c.use_gpps;
  tta.freeze_aug_encoder = c.freeze_aug_encoder;
  tta.shot_beta = c.shot_beta;
  tta.drop_keep_prob = c.drop_keep_prob;
  tta.bn_prior_rho = c.bn_rho;
  return tta;
}

GinConfig gin_from_experiment(const ExperimentConfig& c, std::size_t feature_width,
                              std::size_t task_count) {
  GinConfig gin;
  gin.num_layers = c.num_layers;
  gin.hidden_dim = c.hidden_dim;
  gin.feature_width = feature_width;
  gin.task_count = task_count;
  gin.dropout_rate = c.dropout;
  return gin;
}

ShiftProfile profile_from_experiment(const ExperimentConfig& c) {
  ShiftProfile profile;
  profile.size_range_train = {c.train_size_min, c.train_size_max};
  profile.size_range_test = {c.test_size_min, c.test_size_max};
  profile.attach_style_train = attach_style_from_name(c.train_attach);
  profile.attach_style_test = attach_style_from_name(c.test_attach);
  return profile;
}

SeedContext& ensure_seed(SeedCache& cache, const ExperimentConfig& config,
                         std::uint64_t seed) {
  auto it = cache.find(seed);
  if (it != cache.end()) return it->second;

  SeedContext ctx;
  if (config.dataset_path.empty()) {
    ctx.data = generate_motif_ood_dataset(seed, config.n_graphs,
                                          profile_from_experiment(config),
                                          config.task_count);
  } else {
    ctx.data = load_dataset(config.dataset_path);
  }
  ctx.bundle = init_model(
      gin_from_experiment(config, ctx.data.feature_width, ctx.data.task_count), seed);
  TrainOptions opts;
  opts.epochs = config.train_epochs;
  opts.lr = config.train_lr;
  opts.weight_decay = config.train_weight_decay;
  opts.batch_size = config.train_batch_size;
  opts.seed = seed;
  ctx.train_log = offline_train(ctx.bundle, ctx.data.graphs, ctx.data.split.train,
                                ctx.data.split.validation, opts);
  return cache.emplace(seed, std::move(ctx)).first->second;
}

std::vector<int> adaptation_stream(const std::vector<int>& test_idx, std::uint64_t seed) {
  std::vector<int> stream = test_idx;
  Rng rng(mix_seed(seed, kStreamShuffleTag));
  rng.shuffle(stream);
  return stream;
}

ExperimentOutcome run_experiment(const ExperimentConfig& config, SeedCache* cache) {
  validate_experiment_config(config);
  const std::string hash = config_hash(config);
  SeedCache local;
  SeedCache& store = cache ? *cache : local;

  ExperimentOutcome out;
  for (std::uint64_t seed : config.seeds) {
    const auto start = std::chrono::steady_clock::now();
    try {
      SeedContext& ctx = ensure_seed(store, config, seed);
      const CellResult cell = run_cell(
          ctx, config, seed, adaptation_stream(ctx.data.split.test, seed));
      push_auc_rows(out.rows, config.method, seed, cell.auc, cell.wall_ms, hash);
    } catch (const std::exception& e) {
      out.errors.push_back("method=" + config.method + " seed=" + std::to_string(seed) +
                           ": " + e.what());
      out.rows.push_back(make_row(config.method, std::to_string(seed), "mean",
                                  std::numeric_limits<double>::quiet_NaN(),
                                  elapsed_ms(start), hash));
    }
  }
  write_results_csv((std::filesystem::path(config.out_dir) / "results.csv").string(),
                    out.rows);
  append_errors_log(config.out_dir, out.errors, out.notices);
  return out;
}

ExperimentOutcome run_ablation(const ExperimentConfig& config, SeedCache* cache) {
  validate_experiment_config(config);
  if (method_from_name(config.method) != Method::gapgc) {
    throw ConfigError("run_ablation requires method gapgc");
  }
  const std::string hash = config_hash(config);
  SeedCache local;
  SeedCache& store = cache ? *cache : local;

  struct Arm {
    const char* label;
    bool adapt;
    bool use_ala;
    bool use_gpps;
  };
  const Arm arms[] = {
      {"baseline", false, false, false},
      {"w/Both", true, true, true},
      {"w/o ALA", true, false, true},
      {"w/o GPPS", true, true, false},
      {"w/o Both", true, false, false},
  };

  ExperimentOutcome out;
  // mean-over-seeds bookkeeping per arm: sum of per-seed mean AUCs and ms
  std::map<std::string, std::pair<std::vector<double>, std::vector<long long>>> summary;

  for (std::uint64_t seed : config.seeds) {
    for (const Arm& arm : arms) {
      const auto start = std::chrono::steady_clock::now();
      try {
        SeedContext& ctx = ensure_seed(store, config, seed);
        CellResult cell;
        if (arm.adapt) {
          cell = run_cell(ctx, config, seed, adaptation_stream(ctx.data.split.test, seed),
                          [&](TTAConfig& tta) {
                            tta.use_ala = arm.use_ala;
                            tta.use_gpps = arm.use_gpps;
                          });
        } else {
          ModelBundle frozen = ctx.bundle;
          cell.auc = evaluate_auc(frozen, ctx.data.graphs, ctx.data.split.test,
                                  config.tta_batch_size);
          cell.wall_ms = elapsed_ms(start);
        }
        push_auc_rows(out.rows, arm.label, seed, cell.auc, cell.wall_ms, hash);
        summary[arm.label].first.push_back(cell.auc.mean);
        summary[arm.label].second.push_back(cell.wall_ms);
      } catch (const std::exception& e) {
        out.errors.push_back(std::string("cell=") + arm.label + " seed=" +
                             std::to_string(seed) + ": " + e.what());
        out.rows.push_back(make_row(arm.label, std::to_string(seed), "mean",
                                    std::numeric_limits<double>::quiet_NaN(),
                                    elapsed_ms(start), hash));
      }
    }
  }

  for (const Arm& arm : arms) {
    const auto it = summary.find(arm.label);
    double mean = std::numeric_limits<double>::quiet_NaN();
    long long ms = 0;
    if (it != summary.end() && !it->second.first.empty()) {
      double total = 0.0;
      for (double v : it->second.first) total += v;
      mean = total / static_cast<double>(it->second.first.size());
      for (long long v : it->second.second) ms += v;
      ms /= static_cast<long long>(it->second.second.size());
    }
    ResultRow row = make_row(arm.label, "mean", "mean", mean, ms, hash);
    out.rows.push_back(row);
  }

  write_results_csv((std::filesystem::path(config.out_dir) / "ablation.csv").string(),
                    out.rows);
  append_errors_log(config.out_dir, out.errors, out.notices);
  return out;
}

SweepOutcome sweep_fraction(const ExperimentConfig& config,
                            const std::vector<double>& fractions, SeedCache* cache) {
  validate_experiment_config(config);
  if (fractions.empty()) throw ConfigError("sweep_fraction: fraction list is empty");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (fractions[i] <= 0.0 || fractions[i] > 1.0) {
      throw ConfigError("sweep_fraction: fractions must lie in (0, 1]");
    }
    if (i > 0 && fractions[i] <= fractions[i - 1]) {
      throw ConfigError("sweep_fraction: fractions must be strictly ascending");
    }
  }
  const std::string hash = config_hash(config);
  SeedCache local;
  SeedCache& store = cache ? *cache : local;

  SweepOutcome out;
  for (std::uint64_t seed : config.seeds) {
    for (double f : fractions) {
      const auto start = std::chrono::steady_clock::now();
      SweepRow row;
      row.method = config.method;
      row.seed = std::to_string(seed);
      row.fraction = f;
      row.config_hash = hash;
      try {
        SeedContext& ctx = ensure_seed(store, config, seed);
        const std::vector<int> stream = adaptation_stream(ctx.data.split.test, seed);
        const std::size_t take = static_cast<std::size_t>(
            std::ceil(f * static_cast<double>(stream.size())));
        const std::vector<int> subset(stream.begin(),
                                      stream.begin() + static_cast<std::ptrdiff_t>(take));
        const CellResult cell = run_cell(ctx, config, seed, subset);
        row.auc = cell.auc.mean;
        row.wall_ms = cell.wall_ms;
      } catch (const std::exception& e) {
        out.errors.push_back("fraction=" + format_double(f) + " seed=" +
                             std::to_string(seed) + ": " + e.what());
        row.auc = std::numeric_limits<double>::quiet_NaN();
        row.wall_ms = elapsed_ms(start);
      }
      out.rows.push_back(row);
    }
  }

  write_sweep_csv((std::filesystem::path(config.out_dir) / "sweep.csv").string(),
                  out.rows);
  append_errors_log(config.out_dir, out.errors, {});
  return out;
}

ExperimentOutcome false_pseudo_label_probe(const ExperimentConfig& config,
                                           SeedCache* cache) {
  validate_experiment_config(config);
  if (method_from_name(config.method) != Method::tent) {
    throw ConfigError("false_pseudo_label_probe requires method tent");
  }
  const std::string hash = config_hash(config);
  SeedCache local;
  SeedCache& store = cache ? *cache : local;

  ExperimentOutcome out;
  for (std::uint64_t seed : config.seeds) {
    const auto start = std::chrono::steady_clock::now();
    try {
      SeedContext& ctx = ensure_seed(store, config, seed);
      const std::vector<int> stream = adaptation_stream(ctx.data.split.test, seed);

      // Oracle subset selection: pseudo-label wrong on any present task.
      const std::vector<PseudoLabel> pseudo =
          eval_pseudo_labels(ctx.bundle, ctx.data.graphs, stream, config.tta_batch_size);
      std::vector<int> false_subset;
      for (std::size_t i = 0; i < stream.size(); ++i) {
        const Graph& g = ctx.data.graphs[static_cast<std::size_t>(stream[i])];
        bool wrong = false;
        for (std::size_t t = 0; t < g.labels.size() && !wrong; ++t) {
          if (g.labels[t] != kMissingLabel && pseudo[i][t] != g.labels[t]) wrong = true;
        }
        if (wrong) false_subset.push_back(stream[i]);
      }

      const CellResult all_cell = run_cell(ctx, config, seed, stream);
      push_auc_rows(out.rows, "tent_all", seed, all_cell.auc, all_cell.wall_ms, hash);

      if (false_subset.empty()) {
        out.notices.push_back("seed " + std::to_string(seed) +
                              ": no false-pseudo-label graphs; tent_false_subset skipped");
        continue;
      }
      const CellResult false_cell = run_cell(ctx, config, seed, false_subset);
      push_auc_rows(out.rows, "tent_false_subset", seed, false_cell.auc,
                    false_cell.wall_ms, hash);
    } catch (const std::exception& e) {
      out.errors.push_back("probe seed=" + std::to_string(seed) + ": " + e.what());
      out.rows.push_back(make_row("tent_all", std::to_string(seed), "mean",
                                  std::numeric_limits<double>::quiet_NaN(),
                                  elapsed_ms(start), hash));
    }
  }

  write_results_csv((std::filesystem::path(config.out_dir) / "probe.csv").string(),
                    out.rows);
  append_errors_log(config.out_dir, out.errors, out.notices);
  return out;
}

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  std::vector<std::string> lines;
  lines.reserve(rows.size());
  for (const auto& r : rows) {
    lines.push_back(r.method + "," + r.seed + "," + r.split + "," + r.task_id + "," +
                    format_double(r.auc) + "," + std::to_string(r.wall_ms) + "," +
                    r.config_hash);
  }
  write_csv_atomic(path, kResultsCsvHeader, lines);
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::vector<std::string> lines;
  lines.reserve(rows.size());
  for (const auto& r : rows) {
    lines.push_back(r.method + "," + r.seed + "," + format_double(r.fraction) + "," +
                    format_double(r.auc) + "," + std::to_string(r.wall_ms) + "," +
                    r.config_hash);
  }
  write_csv_atomic(path, kSweepCsvHeader, lines);
}

}  // namespace gapgc
