#pragma once

namespace glyphlm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace glyphlm
