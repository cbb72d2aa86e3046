#pragma once

#include <cstdint>
#include <vector>

#include "gapgc/autodiff.hpp"
#include "gapgc/graph.hpp"
#include "gapgc/models.hpp"
#include "gapgc/rng.hpp"

namespace gapgc {

enum class AugmenterMode {
  learnable,       // pairwise MLP scorer over [h_i, h_j]
  parameter_free,  // omega = cosine(h_i, h_j), no scorer parameters
};

// Installs the augmenter into the bundle: Theta_1 = copy of the trained
// encoder under aug.enc.* (with its own batch-norm state), and in learnable
// mode Theta_2 = freshly initialized scorer MLP under aug.scorer.*. The
// scorer's output bias starts at logit(initial_keep) so the initial keep law
// matches a random drop of the same strength; initial_keep must lie in (0,1).
void init_augmenter(ModelBundle& bundle, AugmenterMode mode, std::uint64_t seed,
                    double initial_keep = 0.8);

// One logit per undirected source pair, ordered like batch.pairs (canonical
// (min,max) node ids, so PF logits are symmetric by construction).
// Learnable: omega_ij = MLP(concat(h_i, h_j)); PF: omega_ij = cosine with
// zero-norm rows mapping to 0. h comes from the augmenter encoder with all
// edge weights 1.
Tensor compute_edge_logits(Tape& tape, const BoundParams& params, ModelBundle& bundle,
                           const GraphBatch& batch, AugmenterMode mode,
                           BnMode bn_mode = BnMode::use_batch_stats);

// Clamped uniform noise for the concrete relaxation, one draw per pair.
std::vector<double> draw_gumbel_noise(Rng& rng, std::size_t n);

// Concrete relaxation: ehat = sigmoid((log d - log(1-d) + omega) / tau),
// differentiable in omega with the noise treated as constant.
Tensor gumbel_sigmoid(Tape& tape, const Tensor& omega, double tau,
                      const std::vector<double>& delta);

// Mean of omega over undirected pairs; 0 when there are none.
Tensor regularizer_le(Tape& tape, const Tensor& omega);

// Bernoulli(keep_prob) mask per pair, in {0,1}; the non-learnable ablation.
Tensor random_edge_drop(std::size_t num_pairs, double keep_prob, Rng& rng);

}  // namespace gapgc
