#include "gapgc/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "gapgc/error.hpp"

namespace gapgc {

using nlohmann::json;

void validate_config(const GinConfig& config) {
  if (config.num_layers < 1) throw ConfigError("GinConfig: num_layers must be >= 1");
  if (config.hidden_dim < 1) throw ConfigError("GinConfig: hidden_dim must be >= 1");
  if (config.feature_width < 1) throw ConfigError("GinConfig: feature_width must be >= 1");
  if (config.task_count < 1) throw ConfigError("GinConfig: task_count must be >= 1");
  if (config.dropout_rate < 0.0 || config.dropout_rate > 0.5) {
    throw ConfigError("GinConfig: dropout_rate must lie in [0, 0.5]");
  }
}

namespace {

Tensor glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = rng.uniform(-limit, limit);
  return Tensor({fan_in, fan_out}, std::move(v));
}

std::string layer_name(const std::string& prefix, std::size_t l, const char* suffix) {
  return prefix + ".l" + std::to_string(l) + "." + suffix;
}

}  // namespace

void add_encoder_params(ParamStore& store, const std::string& prefix,
                        const GinConfig& config, Partition partition, Rng& rng) {
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::size_t in = l == 0 ? config.feature_width : config.hidden_dim;
    const std::size_t hid = config.hidden_dim;
    store.add(layer_name(prefix, l, "w1"), glorot(rng, in, hid), partition);
    store.add(layer_name(prefix, l, "b1"), Tensor::zeros({1, hid}), partition);
    store.add(layer_name(prefix, l, "w2"), glorot(rng, hid, hid), partition);
    store.add(layer_name(prefix, l, "b2"), Tensor::zeros({1, hid}), partition);
    store.add(layer_name(prefix, l, "bn.gamma"), Tensor::full({1, hid}, 1.0), partition);
    store.add(layer_name(prefix, l, "bn.beta"), Tensor::zeros({1, hid}), partition);
  }
}

ModelBundle init_model(const GinConfig& config, std::uint64_t seed) {
  validate_config(config);
  ModelBundle bundle;
  bundle.config = config;
  Rng rng(mix_seed(seed, 0x1717));

  add_encoder_params(bundle.params, "enc", config, Partition::encoder, rng);
  bundle.params.add("clf.w", glorot(rng, config.hidden_dim, config.task_count),
                    Partition::classifier);
  bundle.params.add("clf.b", Tensor::zeros({1, config.task_count}), Partition::classifier);
  bundle.params.add("proj.w1", glorot(rng, config.hidden_dim, config.hidden_dim),
                    Partition::projector);
  bundle.params.add("proj.b1", Tensor::zeros({1, config.hidden_dim}), Partition::projector);
  bundle.params.add("proj.w2", glorot(rng, config.hidden_dim, config.hidden_dim),
                    Partition::projector);
  bundle.params.add("proj.b2", Tensor::zeros({1, config.hidden_dim}), Partition::projector);

  bundle.bn_states.assign(config.num_layers, BnState::init(config.hidden_dim));
  return bundle;
}

Tensor unit_edge_weights(const GraphBatch& batch) {
  return Tensor::full({batch.num_pairs()}, 1.0);
}

Tensor encode_nodes(Tape& tape, const BoundParams& params, const std::string& prefix,
                    const GinConfig& config, std::vector<BnState>& bn_states,
                    const GraphBatch& batch, const Tensor& edge_weights,
                    const EncodeOptions& opts) {
  if (edge_weights.size() != batch.num_pairs()) {
    throw ContractError("encode_nodes: edge weight count " +
                        std::to_string(edge_weights.size()) + " does not match pair count " +
                        std::to_string(batch.num_pairs()));
  }
  for (double w : edge_weights.data()) {
    if (w < 0.0 || w > 1.0) {
      throw ContractError("encode_nodes: edge weight " + std::to_string(w) +
                          " outside [0, 1]");
    }
  }
  if (bn_states.size() != config.num_layers) {
    throw ContractError("encode_nodes: batch-norm state count does not match layer count");
  }

  const std::size_t n = batch.num_nodes();
  Tensor weights_col = edge_weights.size() == 0
                           ? Tensor({0, 1}, {})
                           : tape.reshape(edge_weights, {edge_weights.size(), 1});

  Tensor h = batch.features;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    Tensor agg;
    if (batch.num_pairs() > 0) {
      Tensor src = tape.index_select(h, batch.edge_src);
      Tensor w = tape.index_select(weights_col, batch.edge_pair);
      agg = tape.segment_sum(tape.mul(src, w), batch.edge_dst, n);
    } else {
      agg = Tensor::zeros({n, h.cols()});
    }
    Tensor x = tape.add(tape.scale(h, 1.0 + config.epsilon), agg);

    x = tape.add(tape.matmul(x, params[layer_name(prefix, l, "w1")]),
                 params[layer_name(prefix, l, "b1")]);
    x = tape.relu(x);
    x = tape.add(tape.matmul(x, params[layer_name(prefix, l, "w2")]),
                 params[layer_name(prefix, l, "b2")]);

    if (opts.pre_bn_trace) {
      opts.pre_bn_trace->push_back(Tensor(x.shape(), x.data()));
    }
    x = tape.batchnorm(x, params[layer_name(prefix, l, "bn.gamma")],
                       params[layer_name(prefix, l, "bn.beta")], bn_states[l],
                       opts.bn_mode, opts.bn_momentum);
    if (l + 1 < config.num_layers) {
      x = tape.relu(x);
      if (opts.dropout_rng && config.dropout_rate > 0.0) {
        const double keep = 1.0 - config.dropout_rate;
        std::vector<double> mask(x.size());
        for (auto& m : mask) m = opts.dropout_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
        x = tape.mul(x, Tensor(x.shape(), std::move(mask)));
      }
    }
    h = x;
  }
  return h;
}

Tensor mean_pool(Tape& tape, const Tensor& node_embeddings, const GraphBatch& batch) {
  const std::size_t m = batch.num_graphs();
  Tensor sums = tape.segment_sum(node_embeddings, batch.node_to_graph, m);
  std::vector<double> inv(m);
  for (std::size_t g = 0; g < m; ++g) {
    inv[g] = 1.0 / static_cast<double>(batch.node_offset[g + 1] - batch.node_offset[g]);
  }
  return tape.mul(sums, Tensor({m, 1}, std::move(inv)));
}

Tensor classify(Tape& tape, const BoundParams& params, const Tensor& pooled) {
  return tape.add(tape.matmul(pooled, params["clf.w"]), params["clf.b"]);
}

Tensor project(Tape& tape, const BoundParams& params, const Tensor& pooled) {
  Tensor h = tape.relu(tape.add(tape.matmul(pooled, params["proj.w1"]), params["proj.b1"]));
  return tape.add(tape.matmul(h, params["proj.w2"]), params["proj.b2"]);
}

namespace {

json bn_to_json(const BnState& s) {
  return json{{"mean", s.running_mean}, {"var", s.running_var}, {"eps", s.eps}};
}

BnState bn_from_json(const json& j) {
  BnState s;
  s.running_mean = j.at("mean").get<std::vector<double>>();
  s.running_var = j.at("var").get<std::vector<double>>();
  s.eps = j.at("eps").get<double>();
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelBundle& bundle) {
  json doc;
  doc["format"] = "gapgc-checkpoint-v1";
  doc["config"] = {{"num_layers", bundle.config.num_layers},
                   {"hidden_dim", bundle.config.hidden_dim},
                   {"feature_width", bundle.config.feature_width},
                   {"task_count", bundle.config.task_count},
                   {"epsilon", bundle.config.epsilon},
                   {"dropout_rate", bundle.config.dropout_rate}};
  json params = json::object();
  for (const auto& [name, entry] : bundle.params.entries()) {
    params[name] = {{"shape", entry.value.shape()},
                    {"values", entry.value.data()},
                    {"partition", partition_name(entry.partition)},
                    {"trainable", entry.trainable}};
  }
  doc["params"] = std::move(params);
  json bn = json::array();
  for (const BnState& s : bundle.bn_states) bn.push_back(bn_to_json(s));
  doc["bn_states"] = std::move(bn);
  json aug_bn = json::array();
  for (const BnState& s : bundle.aug_bn_states) aug_bn.push_back(bn_to_json(s));
  doc["aug_bn_states"] = std::move(aug_bn);

  std::ofstream out(path);
  if (!out) throw ParseError("save_checkpoint: cannot open " + path + " for writing");
  out << doc.dump() << '\n';
  if (!out) throw ParseError("save_checkpoint: write to " + path + " failed");
}

ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_checkpoint: cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("load_checkpoint: " + path + ": " + e.what());
  }
  if (!doc.contains("format") || doc["format"] != "gapgc-checkpoint-v1") {
    throw ParseError("load_checkpoint: " + path + " has an unknown format tag");
  }

  ModelBundle bundle;
  const json& cfg = doc.at("config");
  bundle.config.num_layers = cfg.at("num_layers").get<std::size_t>();
  bundle.config.hidden_dim = cfg.at("hidden_dim").get<std::size_t>();
  bundle.config.feature_width = cfg.at("feature_width").get<std::size_t>();
  bundle.config.task_count = cfg.at("task_count").get<std::size_t>();
  bundle.config.epsilon = cfg.at("epsilon").get<double>();
  bundle.config.dropout_rate = cfg.at("dropout_rate").get<double>();
  validate_config(bundle.config);

  for (const auto& [name, p] : doc.at("params").items()) {
    Tensor value(p.at("shape").get<std::vector<std::size_t>>(),
                 p.at("values").get<std::vector<double>>());
    bundle.params.add(name, std::move(value),
                      partition_from_name(p.at("partition").get<std::string>()),
                      p.at("trainable").get<bool>());
  }
  for (const json& s : doc.at("bn_states")) bundle.bn_states.push_back(bn_from_json(s));
  for (const json& s : doc.at("aug_bn_states"))
    bundle.aug_bn_states.push_back(bn_from_json(s));
  return bundle;
}

std::uint64_t partition_checksum(const ParamStore& store, Partition partition) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, entry] : store.entries()) {
    if (entry.partition != partition) continue;
    mix(name.data(), name.size());
    mix(entry.value.data().data(), entry.value.size() * sizeof(double));
  }
  return h;
}

}  // namespace gapgc
