#include "metosc/log.hpp"

#include <iostream>
#include <mutex>

namespace metosc::log {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

Sink& current() {
  static Sink sink = [](Level level, const std::string& msg) {
    std::cerr << (level == Level::Warning ? "warning: " : "") << msg << '\n';
  };
  return sink;
}

void emit(Level level, const std::string& msg) {
  std::lock_guard lock(sink_mutex());
  if (current()) current()(level, msg);
}

}  // namespace

void set_sink(Sink sink) {
  std::lock_guard lock(sink_mutex());
  current() = std::move(sink);
}

void warning(const std::string& msg) { emit(Level::Warning, msg); }
void info(const std::string& msg) { emit(Level::Info, msg); }

}  // namespace metosc::log
