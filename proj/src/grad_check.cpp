#include "gapgc/grad_check.hpp"

#include <cmath>
#include <cstring>

#include "gapgc/error.hpp"

namespace gapgc {

namespace {

double evaluate(const ScalarFn& fn, const ParamStore& store) {
  Tape tape;
  Tensor loss = fn(tape, store);
  if (loss.size() != 1) {
    throw ContractError("grad_check: objective must return a scalar, got " +
                        shape_string(loss));
  }
  return loss.data()[0];
}

GradMap analytic_grads(const ScalarFn& fn, const ParamStore& store) {
  Tape tape;
  Tensor loss = fn(tape, store);
  if (loss.size() != 1) {
    throw ContractError("grad_check: objective must return a scalar, got " +
                        shape_string(loss));
  }
  return tape.backward(loss);
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& fn, ParamStore& store, double epsilon,
                           double rel_tol, double abs_tol) {
  const double base_a = evaluate(fn, store);
  const double base_b = evaluate(fn, store);
  if (std::memcmp(&base_a, &base_b, sizeof(double)) != 0) {
    throw DeterminismError(
        "grad_check: objective is not deterministic (two evaluations differ)");
  }

  GradMap analytic = analytic_grads(fn, store);

  GradCheckReport report;
  for (auto& [name, entry] : store.entries()) {
    if (!entry.trainable) continue;
    auto it = analytic.find(name);
    if (it == analytic.end()) {
      throw ContractError("grad_check: backward returned no gradient for leaf " + name);
    }
    const Tensor& grad = it->second;
    if (!same_shape(grad, entry.value)) {
      throw ContractError("grad_check: gradient shape mismatch for " + name);
    }

    GradCheckEntry worst;
    worst.param = name;
    auto& values = entry.value.mutable_data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + epsilon;
      const double up = evaluate(fn, store);
      values[k] = saved - epsilon;
      const double down = evaluate(fn, store);
      values[k] = saved;

      const double numeric = (up - down) / (2.0 * epsilon);
      const double ad = grad.data()[k];
      const double diff = std::abs(ad - numeric);
      const double scale = std::max(std::abs(ad), std::abs(numeric));
      const double rel = scale > 0.0 ? diff / scale : 0.0;
      const bool ok = diff <= abs_tol + rel_tol * scale;
      if (!ok) report.passed = false;
      if (rel >= worst.rel_err) {
        worst.flat_index = k;
        worst.analytic = ad;
        worst.numeric = numeric;
        worst.rel_err = rel;
      }
      // Only count toward max_rel_err when the entry actually matters; tiny
      // absolute disagreements below abs_tol are finite-difference noise.
      if (diff > abs_tol) report.max_rel_err = std::max(report.max_rel_err, rel);
    }
    report.worst.push_back(worst);
  }
  return report;
}

}  // namespace gapgc
