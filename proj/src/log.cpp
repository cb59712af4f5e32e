#include "latred/log.hpp"

#include <atomic>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace latred {

namespace {

LogLevel level_from_env() {
  const char* env = std::getenv("LATRED_LOG");
  if (env == nullptr) return LogLevel::Quiet;
  if (std::strcmp(env, "debug") == 0 || std::strcmp(env, "2") == 0) return LogLevel::Debug;
  if (std::strcmp(env, "info") == 0 || std::strcmp(env, "1") == 0) return LogLevel::Info;
  return LogLevel::Quiet;
}

std::atomic<LogLevel>& level_store() {
  static std::atomic<LogLevel> level{level_from_env()};
  return level;
}

void vlog(const char* tag, const char* fmt, va_list args) {
  std::fprintf(stderr, "[latred %s] ", tag);
  std::vfprintf(stderr, fmt, args);
  std::fputc('\n', stderr);
}

}  // namespace

LogLevel log_level() { return level_store().load(); }

void set_log_level(LogLevel level) { level_store().store(level); }

void log_info(const char* fmt, ...) {
  if (log_level() < LogLevel::Info) return;
  va_list args;
  va_start(args, fmt);
  vlog("info", fmt, args);
  va_end(args);
}

void log_debug(const char* fmt, ...) {
  if (log_level() < LogLevel::Debug) return;
  va_list args;
  va_start(args, fmt);
  vlog("debug", fmt, args);
  va_end(args);
}

void log_warn(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  vlog("warn", fmt, args);
  va_end(args);
}

}  // namespace latred
