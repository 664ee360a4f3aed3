#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "wsr/drsn.hpp"
#include "json.hpp"

namespace wsr::drsn {

// WNET-v1 layout:
//   "WNET" | u32 version = 1 | u64 header length | JSON header |
//   f32 payloads in manifest order
// All integers and floats little-endian. The header carries the full
// DrsnConfig and a manifest of {name, shape, offset} with byte offsets
// relative to the start of the payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json config_to_json(const DrsnConfig& config);
DrsnConfig config_from_json(const nlohmann::json& j);

std::string serialize_checkpoint(const DrsnModel<float>& model);
DrsnModel<float> parse_checkpoint(std::string_view bytes);

void save_checkpoint(const DrsnModel<float>& model, const std::filesystem::path& path);
DrsnModel<float> load_checkpoint(const std::filesystem::path& path);

// Loads parameters into an existing model. The file's manifest must match
// the model's names and shapes exactly (ParamMismatchError otherwise).
void load_checkpoint_into(DrsnModel<float>& model, const std::filesystem::path& path);

}  // namespace wsr::drsn
