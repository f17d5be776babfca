#pragma once

namespace sempt {

inline constexpr const char* kVersion = "sempt-0.1.0";

}  // namespace sempt
