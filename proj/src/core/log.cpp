#include "urbansolar/log.hpp"

#include <spdlog/spdlog.h>

namespace urbansolar {

void log_info(const std::string& message) { spdlog::info("{}", message); }
void log_warn(const std::string& message) { spdlog::warn("{}", message); }

}  // namespace urbansolar
