#pragma once

#include <string>

namespace urbansolar {

// Plain-string logging so translation units that see libtorch's bundled fmt
// never include spdlog.
void log_info(const std::string& message);
void log_warn(const std::string& message);

}  // namespace urbansolar
