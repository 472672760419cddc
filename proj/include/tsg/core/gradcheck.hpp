#pragma once

#include <functional>

#include "tsg/core/autodiff.hpp"

namespace tsg {

using ScalarFn = std::function<Var(Tape&, Var)>;

namespace detail {

inline double eval_scalar(const ScalarFn& f, const Tensor& point) {
  Tape tape;
  Var x = tape.input(point);
  Var y = f(tape, x);
  if (y.value().size() != 1) throw ContractError("grad_check: function must be scalar-valued");
  const double v = y.value().at(0);
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
  return v;
}

}  // namespace detail

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// Checks the given coordinate subset, or every coordinate when `coords` is
// empty. Central differences in 64-bit want epsilon in [1e-7, 1e-3].
inline double grad_check(const ScalarFn& f, const Tensor& point, double epsilon,
                         const std::vector<std::size_t>& coords = {}) {
  if (epsilon < 1e-7 || epsilon > 1e-3) {
    throw ContractError("grad_check: epsilon outside [1e-7, 1e-3]");
  }
  Tape tape;
  Var x = tape.input(point);
  Var y = f(tape, x);
  if (y.value().size() != 1) throw ContractError("grad_check: function must be scalar-valued");
  tape.backward(y);
  const Tensor analytic = tape.grad(x.id);

  std::vector<std::size_t> idx = coords;
  if (idx.empty()) {
    idx.resize(point.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  }

  double worst = 0.0;
  for (std::size_t i : idx) {
    Tensor shifted = point;
    shifted.at(i) = point.at(i) + epsilon;
    const double up = detail::eval_scalar(f, shifted);
    shifted.at(i) = point.at(i) - epsilon;
    const double down = detail::eval_scalar(f, shifted);
    const double numeric = (up - down) / (2.0 * epsilon);
    if (!std::isfinite(numeric)) throw NumericError("grad_check: non-finite finite difference");
    const double a = analytic.at(i);
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

// Same check for a Parameter inside a larger forward: `loss` must rebuild the
// forward pass from current parameter values on every call.
inline double grad_check_param(const std::function<double()>& loss, Parameter& p,
                               const Tensor& analytic, double epsilon,
                               const std::vector<std::size_t>& coords) {
  double worst = 0.0;
  for (std::size_t i : coords) {
    const double saved = p.value.at(i);
    p.value.at(i) = saved + epsilon;
    const double up = loss();
    p.value.at(i) = saved - epsilon;
    const double down = loss();
    p.value.at(i) = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = analytic.at(i);
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

}  // namespace tsg
