#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wsr/ops.hpp"
#include "wsr/tensor.hpp"

namespace wsr::drsn {

struct DrsnConfig {
  std::size_t num_classes = 11;
  std::size_t input_len = 128;  // power of two >= 32
  std::size_t num_stacks = 3;
  std::size_t channels = 32;
  std::size_t rsu_kernel = 3;  // odd
  std::size_t fc_hidden = 128;  // 0: flatten straight into the classifier
  std::uint64_t seed = 0;

  // Throws InvalidArgument on any out-of-range field.
  void validate() const;
  // Length of the feature map after every stack has halved it.
  std::size_t feature_len() const { return input_len >> num_stacks; }
  bool operator==(const DrsnConfig&) const = default;
};

// Closed-form parameter count. With C channels, k the RSU kernel, S stacks,
// F = C * L / 2^S flattened features, H hidden units and N classes:
//
//   entry convolutions  (2C + C) + (S - 1)(C^2 + C)
//   RSUs (2 per stack)  2S * (C^2 k + C  +  2 (C^2 + C))
//   head                H > 0 ? F H + H + H N + N : F N + N
std::size_t analytic_param_count(const DrsnConfig& config);

template <typename T>
struct Dense {
  ag::Tensor<T> weight;  // [out x in]
  ag::Tensor<T> bias;    // [out]
};

template <typename T>
struct Conv {
  ag::Tensor<T> weight;  // [Cout x Cin x k]
  ag::Tensor<T> bias;    // [Cout]
};

// Two dense layers of width C mapping |x| channel means to sigmoid scales.
template <typename T>
struct ShrinkageBlock {
  Dense<T> fc1;
  Dense<T> fc2;
};

template <typename T>
struct ShrinkageUnit {
  Conv<T> conv;
  ShrinkageBlock<T> shrink;
};

template <typename T>
struct ResidualStack {
  Conv<T> projection;  // 1x1
  std::array<ShrinkageUnit<T>, 2> units;
};

template <typename T>
struct NamedTensor {
  std::string name;
  ag::Tensor<T> tensor;
};

template <typename T>
class DrsnModel {
 public:
  // Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn in parameter order
  // from Rng(config.seed); biases zero. Every parameter requires grad.
  explicit DrsnModel(const DrsnConfig& config);

  const DrsnConfig& config() const noexcept { return config_; }

  // Stable order and names, e.g. "stack0.rsu1.shrink.fc2.weight". The
  // returned tensors share storage with the model.
  std::vector<NamedTensor<T>> named_parameters() const;
  std::vector<ag::Tensor<T>> parameters() const;
  std::size_t param_count() const;

  // Throws InvalidArgument for unknown names.
  ag::Tensor<T>& parameter(std::string_view name);

  // Deep copy in another precision.
  template <typename U>
  DrsnModel<U> cast() const {
    DrsnModel<U> out(config_);
    auto src = named_parameters();
    auto dst = out.named_parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
      auto s = src[i].tensor.data();
      auto d = dst[i].tensor.data();
      for (std::size_t j = 0; j < s.size(); ++j) d[j] = static_cast<U>(s[j]);
    }
    return out;
  }

  // Deep copy in the same precision.
  DrsnModel clone() const { return cast<T>(); }

  std::vector<ResidualStack<T>> stacks;
  std::optional<Dense<T>> hidden;
  Dense<T> classifier;

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F&& f);

  DrsnConfig config_;
};

// sign(x) * max(|x| - tau_c, 0) on [B x C x L] with tau [B x C] >= 0.
// The gradient in x is 1 where |x| > tau and 0 elsewhere (including the
// boundary); in tau it is -sign(x) where |x| > tau.
template <typename T>
ag::Tensor<T> soft_threshold(ag::Tape<T>* tape, const ag::Tensor<T>& x, const ag::Tensor<T>& tau);

// tau = sigmoid(fc2(relu(fc1(a)))) * a with a = gap(|x|).
template <typename T>
ag::Tensor<T> shrinkage_block(ag::Tape<T>* tape, const ag::Tensor<T>& x,
                              const ShrinkageBlock<T>& block);

// x + soft_threshold(r, shrinkage_block(r)) with r = conv(relu(x)).
template <typename T>
ag::Tensor<T> rsu_forward(ag::Tape<T>* tape, const ag::Tensor<T>& x, const ShrinkageUnit<T>& unit);

// 1x1 projection, two RSUs, max-pool: [B x Cin x L] -> [B x C x L/2].
template <typename T>
ag::Tensor<T> residual_stack(ag::Tape<T>* tape, const ag::Tensor<T>& x,
                             const ResidualStack<T>& stack);

// [B x 2 x L] -> logits [B x num_classes].
template <typename T>
ag::Tensor<T> drsn_forward(ag::Tape<T>* tape, const DrsnModel<T>& model, const ag::Tensor<T>& batch);

extern template class DrsnModel<float>;
extern template class DrsnModel<double>;

}  // namespace wsr::drsn
