#include "wsr/optim.hpp"

#include <cmath>
#include <utility>

#include "wsr/error.hpp"

namespace wsr::ag {

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
  if (state.step_count == 0 && state.shapes.empty()) {
    for (const Tensor<T>& p : params) {
      state.shapes.push_back(p.shape());
      state.first_moment.emplace_back(p.numel(), T(0));
      state.second_moment.emplace_back(p.numel(), T(0));
    }
  }
  if (params.size() != state.shapes.size())
    throw ShapeError("adam_step: state tracks " + std::to_string(state.shapes.size()) +
                     " parameters, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != state.shapes[i])
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " changed shape from " +
                       shape_str(state.shapes[i]) + " to " + shape_str(params[i].shape()));
    if (!params[i].has_grad())
      throw TapeError("adam_step: parameter " + std::to_string(i) + " has no grad buffer");
  }

  const AdamOptions& o = state.options;
  const std::size_t t = ++state.step_count;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T step = static_cast<T>(o.lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(o.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].data();
    auto g = std::as_const(params[i]).grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      w[j] -= step * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
    }
  }
}

template void adam_step(std::span<Tensor<float>>, AdamState<float>&);
template void adam_step(std::span<Tensor<double>>, AdamState<double>&);

}  // namespace wsr::ag
