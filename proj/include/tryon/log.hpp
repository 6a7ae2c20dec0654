#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace tryon {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

inline std::atomic<LogLevel>& log_threshold() {
  static std::atomic<LogLevel> level{LogLevel::Warn};
  return level;
}

inline void set_log_level(LogLevel level) { log_threshold() = level; }

inline void log(LogLevel level, std::string_view message) {
  if (level < log_threshold().load()) return;
  static std::mutex mu;
  static constexpr const char* kNames[] = {"debug", "info", "warn", "error"};
  std::lock_guard lock(mu);
  std::clog << "[tryon " << kNames[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace tryon
