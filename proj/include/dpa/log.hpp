#pragma once

#include <functional>
#include <string>

namespace dpa::log {

using Sink = std::function<void(const std::string&)>;

// Warnings go to stderr unless a sink is installed. Returns the previous sink.
Sink set_warning_sink(Sink sink);
void warn(const std::string& message);

} // namespace dpa::log
