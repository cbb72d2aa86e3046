#pragma once

#include <vector>

#include "gapgc/tensor.hpp"

namespace gapgc {

struct AucResult {
  // One entry per task; entries of skipped tasks (missing a class) are NaN
  // and excluded from the mean.
  std::vector<double> per_task;
  std::vector<bool> computed;
  double mean = 0.0;
  std::size_t tasks_computed = 0;
};

// Rank-sum ROC-AUC per task with midrank ties: AUC = P(score+ > score-) +
// 0.5 P(tie), over rows whose label is present. labels holds 0/1 entries and
// label_mask marks presence (both [n, T], matching GraphBatch conventions).
// Tasks where only one class occurs are skipped; the mean covers the rest.
// Throws MetricError when no task is computable.
AucResult roc_auc_multitask(const Tensor& scores, const Tensor& labels,
                            const Tensor& label_mask);

// Single-task convenience: labels use -1 for missing.
double roc_auc_binary(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace gapgc
