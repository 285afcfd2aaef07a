#include "relrank/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace relrank {
namespace {

LogLevel parse_env() {
  const char* env = std::getenv("RELRANK_LOG");
  if (env == nullptr) return LogLevel::kWarn;
  const std::string value(env);
  if (value == "error") return LogLevel::kError;
  if (value == "info") return LogLevel::kInfo;
  if (value == "debug") return LogLevel::kDebug;
  return LogLevel::kWarn;
}

std::atomic<int>& level_storage() {
  static std::atomic<int> level{static_cast<int>(parse_env())};
  return level;
}

constexpr const char* kLevelNames[] = {"error", "warn", "info", "debug"};

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_storage().load()); }

void set_log_level(LogLevel level) { level_storage().store(static_cast<int>(level)); }

void log_message(LogLevel level, std::string_view message) {
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  std::cerr << "[relrank " << kLevelNames[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace relrank
