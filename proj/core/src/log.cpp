#include "avsr/log.hpp"

#include <spdlog/spdlog.h>

#include "avsr/error.hpp"

namespace avsr {

void log_debug(const std::string& message) { spdlog::debug(message); }
void log_info(const std::string& message) { spdlog::info(message); }
void log_warn(const std::string& message) { spdlog::warn(message); }
void log_error(const std::string& message) { spdlog::error(message); }

void set_log_level(LogLevel level) {
  switch (level) {
    case LogLevel::kDebug: spdlog::set_level(spdlog::level::debug); break;
    case LogLevel::kInfo: spdlog::set_level(spdlog::level::info); break;
    case LogLevel::kWarn: spdlog::set_level(spdlog::level::warn); break;
    case LogLevel::kError: spdlog::set_level(spdlog::level::err); break;
    case LogLevel::kOff: spdlog::set_level(spdlog::level::off); break;
  }
}

LogLevel parse_log_level(const std::string& name) {
  if (name == "debug") return LogLevel::kDebug;
  if (name == "info") return LogLevel::kInfo;
  if (name == "warn") return LogLevel::kWarn;
  if (name == "error") return LogLevel::kError;
  if (name == "off") return LogLevel::kOff;
  throw ConfigError("unknown log level '" + name + "' (debug, info, warn, error, off)");
}

}  // namespace avsr
