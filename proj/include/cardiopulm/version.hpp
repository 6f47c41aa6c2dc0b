#pragma once

namespace cardiopulm {

inline constexpr const char* kToolVersion = "cardiopulm 0.1.0";

}  // namespace cardiopulm
