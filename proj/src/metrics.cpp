#include "gapgc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "gapgc/error.hpp"
#include "gapgc/graph.hpp"

namespace gapgc {

namespace {

// Rank-sum AUC over (score, label) pairs, both classes guaranteed present.
double rank_sum_auc(std::vector<std::pair<double, int>>& pairs) {
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  const std::size_t n = pairs.size();
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && pairs[j].first == pairs[i].first) ++j;
    // 1-based midrank for the tie run [i, j)
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (pairs[k].second == 1) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  const double expected_min =
      static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return (pos_rank_sum - expected_min) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace

AucResult roc_auc_multitask(const Tensor& scores, const Tensor& labels,
                            const Tensor& label_mask) {
  if (scores.rank() != 2) {
    throw ShapeError("roc_auc_multitask: scores must be [n, T], got " +
                     shape_string(scores));
  }
  if (!same_shape(scores, labels) || !same_shape(scores, label_mask)) {
    throw ShapeError("roc_auc_multitask: scores/labels/mask shapes differ: " +
                     shape_string(scores) + ", " + shape_string(labels) + ", " +
                     shape_string(label_mask));
  }
  const std::size_t n = scores.shape()[0], tasks = scores.shape()[1];
  if (n == 0) throw MetricError("roc_auc_multitask: empty score matrix");

  AucResult result;
  result.per_task.assign(tasks, std::numeric_limits<double>::quiet_NaN());
  result.computed.assign(tasks, false);
  double total = 0.0;
  for (std::size_t t = 0; t < tasks; ++t) {
    std::vector<std::pair<double, int>> pairs;
    pairs.reserve(n);
    std::size_t n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (label_mask.at(i, t) == 0.0) continue;
      const int y = labels.at(i, t) > 0.5 ? 1 : 0;
      y == 1 ? ++n_pos : ++n_neg;
      pairs.emplace_back(scores.at(i, t), y);
    }
    if (n_pos == 0 || n_neg == 0) continue;  // single-class task: skipped
    result.per_task[t] = rank_sum_auc(pairs);
    result.computed[t] = true;
    total += result.per_task[t];
    ++result.tasks_computed;
  }
  if (result.tasks_computed == 0) {
    throw MetricError("roc_auc_multitask: no task has both classes present");
  }
  result.mean = total / static_cast<double>(result.tasks_computed);
  return result;
}

double roc_auc_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw ContractError("roc_auc_binary: " + std::to_string(scores.size()) +
                        " scores vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = scores.size();
  std::vector<double> s(n), y(n), m(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = scores[i];
    y[i] = labels[i] == 1 ? 1.0 : 0.0;
    m[i] = labels[i] == kMissingLabel ? 0.0 : 1.0;
  }
  return roc_auc_multitask(Tensor({n, 1}, s), Tensor({n, 1}, y), Tensor({n, 1}, m))
      .mean;
}

}  // namespace gapgc
