#pragma once

#include <string_view>
#include <utility>

#include <fmt/core.h>

namespace relrank {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Read once from RELRANK_LOG (error|warn|info|debug); defaults to warn.
LogLevel log_level();
void set_log_level(LogLevel level);
void log_message(LogLevel level, std::string_view message);

template <typename... Args>
void log(LogLevel level, fmt::format_string<Args...> format, Args&&... args) {
  if (level > log_level()) return;
  log_message(level, fmt::format(format, std::forward<Args>(args)...));
}

}  // namespace relrank
