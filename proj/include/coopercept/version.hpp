#pragma once

namespace coopercept {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace coopercept
