#pragma once

namespace wsr {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace wsr
