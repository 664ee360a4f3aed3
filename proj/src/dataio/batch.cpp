#include <algorithm>
#include <numeric>

#include "wsr/dataio.hpp"
#include "wsr/error.hpp"
#include "wsr/rng.hpp"

namespace wsr::data {

ag::Tensor<float> stack_records(std::span<const SignalRecord> records,
                                std::span<const std::size_t> indices) {
  const std::size_t L = indices.empty() ? 0 : records[indices[0]].length();
  ag::Tensor<float> x({indices.size(), 2, L});
  auto dst = x.data();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const SignalRecord& r = records[indices[b]];
    if (r.length() != L)
      throw ShapeError("stack_records: record " + std::to_string(indices[b]) + " has length " +
                       std::to_string(r.length()) + ", expected " + std::to_string(L));
    std::copy(r.iq.begin(), r.iq.end(), dst.begin() + static_cast<std::ptrdiff_t>(b * 2 * L));
  }
  return x;
}

BatchIterator::BatchIterator(std::span<const SignalRecord> records, std::size_t batch_size,
                             BatchMode mode, std::uint64_t seed)
    : records_(records), batch_size_(batch_size), mode_(mode), seed_(seed) {
  if (batch_size_ < 1) throw InvalidArgument("BatchIterator: batch size must be >= 1");
  order_.resize(records_.size());
  start_epoch(0);
}

std::size_t BatchIterator::batches_per_epoch() const noexcept {
  const std::size_t n = records_.size();
  return mode_ == BatchMode::Train ? n / batch_size_ : (n + batch_size_ - 1) / batch_size_;
}

void BatchIterator::start_epoch(std::size_t epoch) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (mode_ == BatchMode::Train) {
    Rng rng(derive_seed(seed_, {epoch}));
    rng.shuffle(std::span<std::size_t>(order_));
  }
  cursor_ = 0;
}

bool BatchIterator::next(Batch& out) {
  const std::size_t n = order_.size();
  if (cursor_ >= n) return false;
  std::size_t take = std::min(batch_size_, n - cursor_);
  if (mode_ == BatchMode::Train && take < batch_size_) {
    cursor_ = n;
    return false;
  }
  out.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                     order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
  cursor_ += take;
  out.x = stack_records(records_, out.indices);
  out.labels.resize(take);
  for (std::size_t b = 0; b < take; ++b) out.labels[b] = records_[out.indices[b]].class_idx;
  return true;
}

}  // namespace wsr::data
