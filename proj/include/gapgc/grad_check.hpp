#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gapgc/autodiff.hpp"
#include "gapgc/param_store.hpp"

namespace gapgc {

struct GradCheckEntry {
  std::string param;
  std::size_t flat_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  bool passed = true;
  double max_rel_err = 0.0;
  std::vector<GradCheckEntry> worst;  // worst entry per parameter
};

// Scalar objective evaluated on a fresh tape against the current store values.
using ScalarFn = std::function<Tensor(Tape&, const ParamStore&)>;

// Central-difference gradient check of `fn` over every trainable parameter of
// `store`. The function must be deterministic: two evaluations at the same
// point must agree bitwise, otherwise DeterminismError is thrown. An entry
// passes when |analytic - numeric| <= abs_tol + rel_tol * max(|analytic|,|numeric|).
GradCheckReport grad_check(const ScalarFn& fn, ParamStore& store, double epsilon = 1e-5,
                           double rel_tol = 1e-4, double abs_tol = 1e-8);

}  // namespace gapgc
