#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace wsr::ag {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tape;

// Dense row-major array. Copies are shallow: two Tensor values may name the
// same storage, which is how parameters are shared between a model and its
// optimizer. Use clone() for a deep copy.
//
// Leaves created with requires_grad carry a zero-initialized grad buffer of
// the same shape. Outputs of recorded operations also report
// requires_grad; their grad buffers only exist while a backward pass runs.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<T> data();
  std::span<const T> data() const;
  T item() const;

  bool requires_grad() const;
  // Only valid on leaves.
  void set_requires_grad(bool on);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<T> grad();
  std::span<const T> grad() const;
  void zero_grad();

  // Deep copy as a new leaf with the same requires_grad flag.
  Tensor clone() const;
  // Deep copy as a constant leaf.
  Tensor detach() const;
  // New leaf sharing nothing, same values, other precision.
  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape());
    auto src = data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<U>(src[i]);
    out.set_requires_grad(requires_grad() && is_leaf());
    return out;
  }

  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  // Grad buffer of a tensor taking part in a backward pass, allocated on
  // demand. Empty span when the tensor does not require grad. Const because
  // handles are shallow: backward rules hold const copies of their inputs.
  std::span<T> grad_for_accumulation() const;

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    bool leaf = true;
  };
  std::shared_ptr<Impl> impl_;

  Impl& impl();
  const Impl& impl() const;

  friend class Tape<T>;
};

// Ordered record of differentiable operations. Each entry keeps its inputs
// and output alive and owns the backward rule that maps the output's grad
// onto the inputs' grads. Entries are appended in execution order, so the
// list is already topologically sorted.
template <typename T>
class Tape {
 public:
  // Reads out.grad() and accumulates into the inputs' grad buffers.
  using BackwardFn = std::function<void(Tensor<T>& out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  // Marks output as a non-leaf derived tensor and appends the entry.
  void record(const Tensor<T>& output, std::vector<Tensor<T>> inputs, BackwardFn backward);

  bool contains(const Tensor<T>& t) const;
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool consumed() const noexcept { return consumed_; }

  // Sets grad = d loss / d leaf for every requires_grad leaf reachable from
  // loss; other leaves are left untouched. Clears the tape afterwards.
  void backward(const Tensor<T>& loss);

  void clear();

 private:
  struct Entry {
    Tensor<T> output;
    std::vector<Tensor<T>> inputs;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

// True when an op with these inputs should be recorded on tape.
template <typename T>
bool should_record(const Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (tape == nullptr) return false;
  for (const Tensor<T>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace wsr::ag
