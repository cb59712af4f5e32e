#pragma once

namespace latred {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

/// Current verbosity, initialized once from the LATRED_LOG environment
/// variable ("quiet" | "info" | "debug", default quiet).
LogLevel log_level();

void set_log_level(LogLevel level);

/// printf-style logging to stderr, filtered by the current level.
void log_info(const char* fmt, ...);
void log_debug(const char* fmt, ...);
void log_warn(const char* fmt, ...);

}  // namespace latred
