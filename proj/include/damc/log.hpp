#pragma once

// Minimal line logger. Verbosity comes from the DAMC_LOG environment variable
// (error, warn, info, debug); default is warn.

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace damc::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

inline Level parse_level(std::string_view s, Level fallback = Level::warn) {
  if (s == "error") return Level::error;
  if (s == "warn" || s == "warning") return Level::warn;
  if (s == "info") return Level::info;
  if (s == "debug") return Level::debug;
  return fallback;
}

inline Level& current_level() {
  static Level level = [] {
    const char* env = std::getenv("DAMC_LOG");
    return env ? parse_level(env) : Level::warn;
  }();
  return level;
}

inline void set_level(Level level) { current_level() = level; }

inline void write(Level level, std::string_view msg) {
  if (static_cast<int>(level) > static_cast<int>(current_level())) return;
  static std::mutex mu;
  static constexpr const char* tags[] = {"error", "warn", "info", "debug"};
  std::lock_guard lock(mu);
  std::clog << "[damc " << tags[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void error(std::string_view msg) { write(Level::error, msg); }
inline void warn(std::string_view msg) { write(Level::warn, msg); }
inline void info(std::string_view msg) { write(Level::info, msg); }
inline void debug(std::string_view msg) { write(Level::debug, msg); }

}  // namespace damc::log
