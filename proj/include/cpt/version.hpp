#pragma once

namespace cpt {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace cpt
