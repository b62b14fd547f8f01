#pragma once

namespace hinite {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hinite
