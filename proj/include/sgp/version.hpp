#pragma once

namespace sgp {

inline constexpr const char* kVersion = "0.1.0";

} // namespace sgp
