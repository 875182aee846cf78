#pragma once

namespace mcmlp {

inline constexpr const char* kVersionString = "0.1.0";

}  // namespace mcmlp
