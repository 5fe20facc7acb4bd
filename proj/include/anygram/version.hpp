#pragma once

namespace anygram {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kToolName = "anygram";

}  // namespace anygram
