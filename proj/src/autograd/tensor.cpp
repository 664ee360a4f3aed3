#include "wsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "wsr/error.hpp"

namespace wsr::ag {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->data.assign(n, T(0));
  set_requires_grad(requires_grad);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw ShapeError("Tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  set_requires_grad(requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor t(std::move(shape));
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

template <typename T>
typename Tensor<T>::Impl& Tensor<T>::impl() {
  if (!impl_) throw Error("use of an undefined Tensor");
  return *impl_;
}

template <typename T>
const typename Tensor<T>::Impl& Tensor<T>::impl() const {
  if (!impl_) throw Error("use of an undefined Tensor");
  return *impl_;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return impl().shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return impl().data.size();
}

template <typename T>
std::span<T> Tensor<T>::data() {
  return impl().data;
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return impl().data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl().data[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return impl().requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  Impl& im = impl();
  if (!im.leaf) throw TapeError("set_requires_grad on a non-leaf tensor");
  im.requires_grad = on;
  if (on)
    im.grad.assign(im.data.size(), T(0));
  else
    im.grad.clear();
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  return impl().leaf;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return impl().requires_grad && impl().grad.size() == impl().data.size();
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (!has_grad()) throw TapeError("tensor has no grad buffer");
  return impl().grad;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) throw TapeError("tensor has no grad buffer");
  return impl().grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (has_grad()) std::fill(impl().grad.begin(), impl().grad.end(), T(0));
}

template <typename T>
std::span<T> Tensor<T>::grad_for_accumulation() const {
  if (!impl_) throw Error("use of an undefined Tensor");
  Impl& im = *impl_;
  if (!im.requires_grad) return {};
  if (im.grad.size() != im.data.size()) im.grad.assign(im.data.size(), T(0));
  return im.grad;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out(shape(), impl().data, false);
  if (requires_grad() && is_leaf()) out.set_requires_grad(true);
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), impl().data, false);
}

template <typename T>
void Tape<T>::record(const Tensor<T>& output, std::vector<Tensor<T>> inputs,
                     BackwardFn backward) {
  auto& im = *output.impl_;
  im.leaf = false;
  im.requires_grad = true;
  im.grad.clear();
  entries_.push_back(Entry{output, std::move(inputs), std::move(backward)});
  consumed_ = false;
}

template <typename T>
bool Tape<T>::contains(const Tensor<T>& t) const {
  for (const Entry& e : entries_)
    if (e.output.same_storage(t)) return true;
  return false;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  if (entries_.empty()) {
    if (consumed_) throw TapeError("backward on a cleared tape: the graph was already consumed");
    throw TapeError("backward on an empty tape");
  }

  std::size_t loss_index = entries_.size();
  for (std::size_t i = entries_.size(); i-- > 0;) {
    if (entries_[i].output.same_storage(loss)) {
      loss_index = i;
      break;
    }
  }
  if (loss_index == entries_.size())
    throw TapeError("backward: loss was not produced on this tape");

  // Reachability: walk back from the loss, marking every tensor whose grad
  // can be nonzero.
  std::unordered_set<const void*> live;
  std::vector<char> active(loss_index + 1, 0);
  live.insert(entries_[loss_index].output.impl_.get());
  for (std::size_t i = loss_index + 1; i-- > 0;) {
    Entry& e = entries_[i];
    if (!live.count(e.output.impl_.get())) continue;
    active[i] = 1;
    for (const Tensor<T>& in : e.inputs)
      if (in.requires_grad()) live.insert(in.impl_.get());
  }

  // Reachable leaves get grad = d loss / d leaf, not an accumulation onto
  // a previous step's value.
  for (std::size_t i = 0; i <= loss_index; ++i) {
    if (!active[i]) continue;
    for (Tensor<T>& in : entries_[i].inputs)
      if (in.requires_grad() && in.is_leaf()) in.zero_grad();
  }

  Tensor<T> seed = entries_[loss_index].output;
  seed.grad_for_accumulation()[0] = T(1);

  for (std::size_t i = loss_index + 1; i-- > 0;) {
    if (!active[i]) continue;
    Entry& e = entries_[i];
    e.output.grad_for_accumulation();
    e.backward(e.output);
  }

  for (std::size_t i = 0; i <= loss_index; ++i) {
    if (!active[i]) continue;
    for (const Tensor<T>& in : entries_[i].inputs) {
      if (!in.requires_grad() || !in.is_leaf()) continue;
      for (T g : in.impl_->grad)
        if (!std::isfinite(g)) throw NonFiniteError("backward produced a non-finite gradient");
    }
  }

  clear();
  consumed_ = true;
}

template <typename T>
void Tape<T>::clear() {
  for (Entry& e : entries_) {
    e.output.impl_->grad.clear();
    e.output.impl_->grad.shrink_to_fit();
  }
  entries_.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace wsr::ag
