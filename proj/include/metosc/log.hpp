#pragma once

#include <functional>
#include <string>

namespace metosc::log {

enum class Level { Info, Warning };

using Sink = std::function<void(Level, const std::string&)>;

/// Replaces the process-wide sink (default: stderr). Pass nullptr to silence.
void set_sink(Sink sink);
void warning(const std::string& msg);
void info(const std::string& msg);

}  // namespace metosc::log
