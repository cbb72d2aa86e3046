#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gapgc/autodiff.hpp"
#include "gapgc/graph.hpp"
#include "gapgc/param_store.hpp"
#include "gapgc/rng.hpp"

namespace gapgc {

struct GinConfig {
  std::size_t num_layers = 5;
  std::size_t hidden_dim = 64;
  std::size_t feature_width = 8;
  std::size_t task_count = 2;
  double epsilon = 0.0;  // GIN self-weight, fixed (GIN-0)
  double dropout_rate = 0.0;
};

void validate_config(const GinConfig& config);

// Encoder + classifier + projector parameters, the encoder's batch-norm
// state, and (once the augmenter is initialized) the augmenter's mirror of
// both. All parameters live in one store, separated by Partition.
struct ModelBundle {
  GinConfig config;
  ParamStore params;
  std::vector<BnState> bn_states;      // one per encoder layer
  std::vector<BnState> aug_bn_states;  // augmenter copy; empty until initialized
};

// Glorot-uniform initialized encoder (enc.*), classifier (clf.*) and
// projector (proj.*).
ModelBundle init_model(const GinConfig& config, std::uint64_t seed);

// Adds one GIN encoder stack (w1/b1/w2/b2/bn.gamma/bn.beta per layer) under
// `prefix` to the store; used for both the model encoder and the augmenter.
void add_encoder_params(ParamStore& store, const std::string& prefix,
                        const GinConfig& config, Partition partition, Rng& rng);

struct EncodeOptions {
  BnMode bn_mode = BnMode::eval;
  // Running-stat update rate in train mode; 1.0 replaces the stats outright.
  double bn_momentum = 0.1;
  // When set (offline training only), applies inverted dropout between GIN
  // layers at config.dropout_rate.
  Rng* dropout_rng = nullptr;
  // When set, receives each layer's pre-normalization activations.
  std::vector<Tensor>* pre_bn_trace = nullptr;
};

// Weighted GIN message passing over `prefix` parameters:
//   h <- MLP_l((1+eps) h_i + sum_j e_ij h_j), batchnorm, relu (none after
//   the last layer).
// edge_weights holds one weight per undirected source pair; both directed
// copies of a pair use it. Differentiable in the parameters and the weights.
Tensor encode_nodes(Tape& tape, const BoundParams& params, const std::string& prefix,
                    const GinConfig& config, std::vector<BnState>& bn_states,
                    const GraphBatch& batch, const Tensor& edge_weights,
                    const EncodeOptions& opts);

// Per-graph mean of node embeddings.
Tensor mean_pool(Tape& tape, const Tensor& node_embeddings, const GraphBatch& batch);

// Affine multi-task head on clf.* -> logits [m, T].
Tensor classify(Tape& tape, const BoundParams& params, const Tensor& pooled);

// 2-layer MLP head on proj.* -> z [m, hidden_dim].
Tensor project(Tape& tape, const BoundParams& params, const Tensor& pooled);

// Convenience: all-ones edge weights for a batch.
Tensor unit_edge_weights(const GraphBatch& batch);

// JSON checkpoint (format tag "gapgc-checkpoint-v1"): config, every
// parameter with partition/trainable flags, and all batch-norm states.
// Round-trips bitwise.
void save_checkpoint(const std::string& path, const ModelBundle& bundle);
ModelBundle load_checkpoint(const std::string& path);

// Order-independent digest of parameter values in one partition; used to
// assert the frozen-classifier contract.
std::uint64_t partition_checksum(const ParamStore& store, Partition partition);

}  // namespace gapgc
