#pragma once

#include <span>

#include "wsr/tensor.hpp"

// Differentiable operators. Every operator takes the tape first; pass
// nullptr (or inputs that do not require grad) to evaluate without
// recording. Shapes are checked eagerly and reported as ShapeError.
namespace wsr::ag {

enum class Padding { Same, Valid };

// input [B x Cin x L], weight [Cout x Cin x k], bias [Cout].
// Same padding keeps L (extra pad on the right for even k); valid gives
// L - k + 1.
template <typename T>
Tensor<T> conv1d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, Padding padding);

// input [B x n], weight [m x n], bias [m] -> input * weight^T + bias.
template <typename T>
Tensor<T> linear(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias);

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x);

template <typename T>
Tensor<T> abs(Tape<T>* tape, const Tensor<T>& x);

// Width 2, stride 2 over the last axis of [B x C x L]. An odd trailing
// element is dropped. Gradient goes to the larger element of each pair,
// the lower index on ties.
template <typename T>
Tensor<T> maxpool1d(Tape<T>* tape, const Tensor<T>& x);

// Global average pooling: [B x C x L] -> [B x C].
template <typename T>
Tensor<T> gap(Tape<T>* tape, const Tensor<T>& x);

// Row-wise softmax of [B x C].
template <typename T>
Tensor<T> softmax(Tape<T>* tape, const Tensor<T>& logits);

// Mean over the batch of -sum_c t_c log softmax(z)_c. Targets are constant
// rows on the simplex (checked to 1e-6). Differentiable in logits only.
template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>* tape, const Tensor<T>& logits,
                                const Tensor<T>& targets);

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> square(Tape<T>* tape, const Tensor<T>& a);

// Scalar [1] results.
template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& a);

template <typename T>
Tensor<T> mean(Tape<T>* tape, const Tensor<T>& a);

// Same element count, new extents. The result does not alias the input.
template <typename T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& a, Shape shape);

// Value-only helpers.
template <typename T>
void softmax_rows(std::span<const T> logits, std::span<T> out, std::size_t classes);

template <typename T>
void check_finite(std::span<const T> values, const char* what);

}  // namespace wsr::ag
