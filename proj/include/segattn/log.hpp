// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>

namespace segattn {

using LogSink = std::function<void(const std::string&)>;

/// Replaces the warning sink (stderr by default) and returns the previous one.
LogSink set_warning_sink(LogSink sink);

void log_warning(const std::string& message);

}  // namespace segattn
