#pragma once

#include <string>

namespace avsr {

enum class LogLevel { kDebug, kInfo, kWarn, kError, kOff };

/// Thin front end over spdlog, kept free of fmt so it can be included next to
/// libtorch (which ships its own fmt).
void log_debug(const std::string& message);
void log_info(const std::string& message);
void log_warn(const std::string& message);
void log_error(const std::string& message);

void set_log_level(LogLevel level);
LogLevel parse_log_level(const std::string& name);

}  // namespace avsr
