#pragma once

#include <vector>

#include "gapgc/autodiff.hpp"

namespace gapgc {

// Per-task hard bits derived from logits: bit_t = 1 iff logit_t > 0; an
// exact 0 resolves to 0.
using PseudoLabel = std::vector<int>;

std::vector<PseudoLabel> pseudo_label(const Tensor& logits);

// Fraction of agreeing tasks.
double multitask_similarity(const PseudoLabel& a, const PseudoLabel& b);

// positives[i] = indices of augmentations whose pseudo-label is at least
// gamma-similar to anchor i's, plus always i itself. Sorted ascending.
struct PositiveSet {
  std::vector<std::vector<int>> positives;
  std::size_t size() const { return positives.size(); }
};

PositiveSet select_positives(const std::vector<PseudoLabel>& anchor_labels,
                             const std::vector<PseudoLabel>& aug_labels, double gamma);

// Group contrast over cosine similarities: for each anchor i, the mean
// log-softmax mass its positives receive over the full row of augmentations;
// returns the negated batch mean. Non-negative for every batch.
Tensor contrastive_loss(Tape& tape, const Tensor& z, const Tensor& z_aug,
                        const PositiveSet& positives);

// Lower-bound diagnostic: log(m) - loss.
double info_nce_estimate(double loss_value, std::size_t m);

}  // namespace gapgc
