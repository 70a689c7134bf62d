#pragma once

namespace splat {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace splat
