#include "gapgc/augmenter.hpp"

#include <cmath>

#include "gapgc/error.hpp"

namespace gapgc {

void init_augmenter(ModelBundle& bundle, AugmenterMode mode, std::uint64_t seed,
                    double initial_keep) {
  if (bundle.params.contains("aug.enc.l0.w1")) {
    throw ContractError("init_augmenter: augmenter already initialized");
  }
  if (initial_keep <= 0.0 || initial_keep >= 1.0) {
    throw ConfigError("init_augmenter: initial_keep must lie in (0, 1)");
  }
  // Theta_1 starts as an exact copy of the trained encoder.
  for (const std::string& name : bundle.params.names(Partition::encoder)) {
    const ParamEntry& src = bundle.params.at(name);
    bundle.params.add("aug." + name, src.value, Partition::aug_encoder);
  }
  bundle.aug_bn_states = bundle.bn_states;

  if (mode == AugmenterMode::learnable) {
    Rng rng(mix_seed(seed, 0xA06));
    const std::size_t hid = bundle.config.hidden_dim;
    const double limit_in = std::sqrt(6.0 / static_cast<double>(3 * hid));
    std::vector<double> w1(2 * hid * hid);
    for (auto& x : w1) x = rng.uniform(-limit_in, limit_in);
    bundle.params.add("aug.scorer.w1", Tensor({2 * hid, hid}, std::move(w1)),
                      Partition::aug_scorer);
    bundle.params.add("aug.scorer.b1", Tensor::zeros({1, hid}), Partition::aug_scorer);
    const double limit_out = std::sqrt(6.0 / static_cast<double>(hid + 1));
    std::vector<double> w2(hid);
    for (auto& x : w2) x = rng.uniform(-limit_out, limit_out);
    bundle.params.add("aug.scorer.w2", Tensor({hid, 1}, std::move(w2)),
                      Partition::aug_scorer);
    // Start the edge-keep law at initial_keep (P(ehat > 1/2) = sigmoid(omega))
    // so the fresh adversary matches the random-drop augmentation strength
    // instead of opening at 50% mass drop.
    const double bias = std::log(initial_keep / (1.0 - initial_keep));
    bundle.params.add("aug.scorer.b2", Tensor({1, 1}, {bias}), Partition::aug_scorer);
  }
}

Tensor compute_edge_logits(Tape& tape, const BoundParams& params, ModelBundle& bundle,
                           const GraphBatch& batch, AugmenterMode mode, BnMode bn_mode) {
  if (batch.num_graphs() == 0) throw ContractError("compute_edge_logits: empty batch");
  const std::size_t p = batch.num_pairs();
  if (p == 0) return Tensor({0}, {});

  EncodeOptions opts;
  opts.bn_mode = bn_mode;
  Tensor h = encode_nodes(tape, params, "aug.enc", bundle.config, bundle.aug_bn_states,
                          batch, unit_edge_weights(batch), opts);

  std::vector<int> first, second;
  first.reserve(p);
  second.reserve(p);
  for (const auto& [u, v] : batch.pairs) {
    first.push_back(u);
    second.push_back(v);
  }
  Tensor hi = tape.index_select(h, first);
  Tensor hj = tape.index_select(h, second);

  if (mode == AugmenterMode::parameter_free) {
    return tape.cosine_rowwise(hi, hj);
  }
  Tensor cat = tape.concat_cols(hi, hj);
  Tensor hidden = tape.relu(
      tape.add(tape.matmul(cat, params["aug.scorer.w1"]), params["aug.scorer.b1"]));
  Tensor logits =
      tape.add(tape.matmul(hidden, params["aug.scorer.w2"]), params["aug.scorer.b2"]);
  return tape.reshape(logits, {p});
}

std::vector<double> draw_gumbel_noise(Rng& rng, std::size_t n) {
  std::vector<double> delta(n);
  for (auto& d : delta) {
    d = rng.uniform();
    if (d < 1e-6) d = 1e-6;
    if (d > 1.0 - 1e-6) d = 1.0 - 1e-6;
  }
  return delta;
}

Tensor gumbel_sigmoid(Tape& tape, const Tensor& omega, double tau,
                      const std::vector<double>& delta) {
  if (tau <= 0.0) throw ConfigError("gumbel_sigmoid: tau must be positive");
  if (delta.size() != omega.size()) {
    throw ContractError("gumbel_sigmoid: noise count " + std::to_string(delta.size()) +
                        " does not match logit count " + std::to_string(omega.size()));
  }
  std::vector<double> noise_logit(delta.size());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (delta[i] <= 0.0 || delta[i] >= 1.0) {
      throw ContractError("gumbel_sigmoid: noise must lie strictly inside (0,1)");
    }
    noise_logit[i] = std::log(delta[i]) - std::log(1.0 - delta[i]);
  }
  Tensor shifted = tape.add(omega, Tensor(omega.shape(), std::move(noise_logit)));
  return tape.sigmoid(tape.scale(shifted, 1.0 / tau));
}

Tensor regularizer_le(Tape& tape, const Tensor& omega) {
  if (omega.size() == 0) return Tensor::scalar(0.0);
  return tape.mean_all(omega);
}

Tensor random_edge_drop(std::size_t num_pairs, double keep_prob, Rng& rng) {
  if (keep_prob <= 0.0 || keep_prob > 1.0) {
    throw ConfigError("random_edge_drop: keep_prob must lie in (0, 1]");
  }
  std::vector<double> mask(num_pairs);
  for (auto& m : mask) m = rng.bernoulli(keep_prob) ? 1.0 : 0.0;
  return Tensor({num_pairs}, std::move(mask));
}

}  // namespace gapgc
