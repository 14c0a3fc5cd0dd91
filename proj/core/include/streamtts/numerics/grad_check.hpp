#pragma once

#include <cstddef>
#include <functional>

#include "streamtts/numerics/tape.hpp"

namespace streamtts::num {

/// Scalar function of one tensor argument, recorded on the given tape.
using ScalarFn = std::function<Var(Tape&, Var)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  Tensor analytic;
  Tensor numeric;
};

/// Compares the tape gradient of `f` at `x` with central differences of
/// step `h`. Relative error per coordinate is
/// |analytic - numeric| / (|numeric| + 1e-8); the maximum is reported.
GradCheckReport grad_check_report(const ScalarFn& f, const Tensor& x, double h);

inline double grad_check(const ScalarFn& f, const Tensor& x, double h) {
  return grad_check_report(f, x, h).max_rel_error;
}

}  // namespace streamtts::num
