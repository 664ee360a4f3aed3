#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace wsr::data {

// One 2 x L example stored as the I plane followed by the Q plane.
struct SignalRecord {
  std::vector<float> iq;
  std::uint16_t class_idx = 0;
  float snr_db = 0.0f;
  bool labeled = true;

  std::size_t length() const noexcept { return iq.size() / 2; }
  bool operator==(const SignalRecord&) const = default;
};

struct DatasetHeader {
  std::uint32_t version = 1;
  std::size_t length = 0;
  std::vector<std::string> class_names;
  std::size_t count = 0;
  std::vector<double> snr_grid;
  std::string provenance;

  bool operator==(const DatasetHeader&) const = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<SignalRecord> records;

  bool operator==(const Dataset&) const = default;
};

}  // namespace wsr::data
