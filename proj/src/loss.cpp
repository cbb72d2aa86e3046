#include "gapgc/loss.hpp"

#include <cmath>

#include "gapgc/error.hpp"

namespace gapgc {

std::vector<PseudoLabel> pseudo_label(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw ShapeError("pseudo_label: expected [m, T] logits, got " + shape_string(logits));
  }
  const std::size_t m = logits.shape()[0], t = logits.shape()[1];
  std::vector<PseudoLabel> out(m, PseudoLabel(t, 0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t task = 0; task < t; ++task) {
      const double v = logits.at(i, task);
      if (std::isnan(v)) {
        throw NumericError("pseudo_label: NaN logit at row " + std::to_string(i) +
                           " task " + std::to_string(task));
      }
      out[i][task] = v > 0.0 ? 1 : 0;
    }
  }
  return out;
}

double multitask_similarity(const PseudoLabel& a, const PseudoLabel& b) {
  if (a.size() != b.size()) {
    throw ContractError("multitask_similarity: label lengths differ (" +
                        std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw ContractError("multitask_similarity: empty labels");
  std::size_t agree = 0;
  for (std::size_t t = 0; t < a.size(); ++t) agree += a[t] == b[t] ? 1 : 0;
  return static_cast<double>(agree) / static_cast<double>(a.size());
}

PositiveSet select_positives(const std::vector<PseudoLabel>& anchor_labels,
                             const std::vector<PseudoLabel>& aug_labels, double gamma) {
  if (anchor_labels.size() != aug_labels.size()) {
    throw ContractError("select_positives: anchor and augmentation counts differ");
  }
  if (gamma < 0.0 || gamma > 1.0) {
    throw ConfigError("select_positives: gamma must lie in [0, 1]");
  }
  const std::size_t m = anchor_labels.size();
  PositiveSet set;
  set.positives.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i || multitask_similarity(anchor_labels[i], aug_labels[j]) >= gamma) {
        set.positives[i].push_back(static_cast<int>(j));
      }
    }
  }
  return set;
}

Tensor contrastive_loss(Tape& tape, const Tensor& z, const Tensor& z_aug,
                        const PositiveSet& positives) {
  if (z.rank() != 2 || !same_shape(z, z_aug)) {
    throw ShapeError("contrastive_loss: z and z_aug must share an [m, d] shape, got " +
                     shape_string(z) + " and " + shape_string(z_aug));
  }
  const std::size_t m = z.shape()[0];
  if (m < 1) throw ContractError("contrastive_loss: empty batch");
  if (positives.size() != m) {
    throw ContractError("contrastive_loss: positive set size does not match batch size");
  }

  // log-softmax of each anchor's similarity row; cosines live in [-1, 1] so
  // the naive exp/log route cannot overflow
  Tensor sims = tape.cosine_matrix(z, z_aug);
  Tensor denom = tape.log(tape.sum_axis(tape.exp(sims), 1));  // [m, 1]
  Tensor log_softmax = tape.sub(sims, denom);

  std::vector<double> weights(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& pos = positives.positives[i];
    if (pos.empty()) {
      throw ContractError("contrastive_loss: anchor " + std::to_string(i) +
                          " has no positives");
    }
    const double w = 1.0 / (static_cast<double>(m) * static_cast<double>(pos.size()));
    for (int d : pos) {
      if (d < 0 || static_cast<std::size_t>(d) >= m) {
        throw IndexError("contrastive_loss: positive index " + std::to_string(d) +
                         " out of range for anchor " + std::to_string(i));
      }
      weights[i * m + static_cast<std::size_t>(d)] = w;
    }
  }
  Tensor picked = tape.mul(log_softmax, Tensor({m, m}, std::move(weights)));
  return tape.scale(tape.sum_all(picked), -1.0);
}

double info_nce_estimate(double loss_value, std::size_t m) {
  if (m < 1) throw ContractError("info_nce_estimate: m must be >= 1");
  return std::log(static_cast<double>(m)) - loss_value;
}

}  // namespace gapgc
