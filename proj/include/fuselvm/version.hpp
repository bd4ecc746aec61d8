#pragma once

namespace fuselvm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace fuselvm
