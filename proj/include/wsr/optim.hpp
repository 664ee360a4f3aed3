#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wsr/tensor.hpp"

namespace wsr::ag {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment buffers for one parameter list. The list order must not change
// between steps; shapes are pinned on the first step.
template <typename T>
struct AdamState {
  AdamOptions options;
  std::size_t step_count = 0;
  std::vector<Shape> shapes;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  AdamState() = default;
  explicit AdamState(AdamOptions opts) : options(opts) {}
};

// One bias-corrected Adam update of every parameter from its grad buffer.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state);

}  // namespace wsr::ag
