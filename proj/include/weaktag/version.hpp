#pragma once

namespace weaktag {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace weaktag
