// SPDX-License-Identifier: Apache-2.0
#include "segattn/log.hpp"

#include <iostream>
#include <mutex>

namespace segattn {

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

LogSink& current_sink() {
  static LogSink sink = [](const std::string& message) { std::cerr << "warning: " << message << '\n'; };
  return sink;
}

}  // namespace

LogSink set_warning_sink(LogSink sink) {
  std::lock_guard lock(sink_mutex());
  std::swap(current_sink(), sink);
  return sink;
}

void log_warning(const std::string& message) {
  std::lock_guard lock(sink_mutex());
  if (current_sink()) current_sink()(message);
}

}  // namespace segattn
