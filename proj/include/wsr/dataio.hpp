#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wsr/dataset.hpp"
#include "wsr/tensor.hpp"

namespace wsr::data {

// WSIG-v1 layout:
//   "WSIG" | u32 version = 1 | u64 header length | JSON DatasetHeader |
//   per record: u16 class_idx, f32 snr_db, u8 labeled, 2L f32 (I then Q)
// All little-endian.
inline constexpr std::uint32_t kWsigVersion = 1;

// Throws InvalidArgument when the header disagrees with the records.
std::string serialize_wsig(const Dataset& ds);
Dataset parse_wsig(std::string_view bytes);

void write_wsig(const Dataset& ds, const std::filesystem::path& path);
Dataset read_wsig(const std::filesystem::path& path);

// SHA-256 of the WSIG serialization.
std::string dataset_digest(const Dataset& ds);

struct SplitSpec {
  double test_frac = 0.20;
  double labeled_frac = 1.0;  // of the non-test remainder
  std::uint64_t seed = 0;

  void validate() const;
};

struct Split {
  Dataset labeled;
  Dataset unlabeled;
  Dataset test;
};

// floor(x + 0.5), guarded against representation error just below a half.
std::size_t round_half_up(double x);

// Per (class, snr) cell of n records: round_half_up(test_frac * n) go to
// test, round_half_up(labeled_frac * rest) keep labels, the remainder is
// marked unlabeled. Cells are shuffled with their own derived seed; each
// part keeps the original record order. Every (class, grid snr) cell must
// be nonempty.
Split stratified_split(const Dataset& ds, const SplitSpec& spec);

enum class BatchMode {
  Train,  // shuffled per epoch, trailing short batch dropped
  Eval,   // dataset order, every record exactly once
};

struct Batch {
  ag::Tensor<float> x;  // [B x 2 x L]
  std::vector<std::uint16_t> labels;
  std::vector<std::size_t> indices;  // into the iterated records
};

// Copies the selected records into a [n x 2 x L] tensor.
ag::Tensor<float> stack_records(std::span<const SignalRecord> records,
                                std::span<const std::size_t> indices);

class BatchIterator {
 public:
  BatchIterator(std::span<const SignalRecord> records, std::size_t batch_size, BatchMode mode,
                std::uint64_t seed);

  std::size_t batches_per_epoch() const noexcept;
  // Resets to the start of the given epoch. In Train mode the order is a
  // shuffle seeded by derive_seed(seed, {epoch}).
  void start_epoch(std::size_t epoch);
  // False once the epoch is exhausted.
  bool next(Batch& out);

 private:
  std::span<const SignalRecord> records_;
  std::size_t batch_size_;
  BatchMode mode_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace wsr::data
