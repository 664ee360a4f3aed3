#pragma once

#include <cstddef>
#include <functional>

#include "wsr/tensor.hpp"

namespace wsr::ag {

// A scalar-valued function of one tensor. The tape argument is null when
// the checker only needs a value.
using ScalarFn = std::function<Tensor<double>(Tape<double>*, const Tensor<double>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares the tape gradient of f at x with central differences of step h
// and reports max_i |analytic_i - numeric_i| / (|analytic_i| + 1e-8).
// Double precision only; h must lie in [1e-7, 1e-3].
GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor<double>& x, double h = 1e-6);

}  // namespace wsr::ag
