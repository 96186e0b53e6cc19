#pragma once

namespace pdelearn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace pdelearn
