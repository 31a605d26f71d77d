#include "dpa/log.hpp"

#include <iostream>
#include <mutex>

namespace dpa::log {

namespace {
std::mutex g_mutex;
Sink g_sink;
} // namespace

Sink set_warning_sink(Sink sink) {
    std::lock_guard lock(g_mutex);
    std::swap(g_sink, sink);
    return sink;
}

void warn(const std::string& message) {
    std::lock_guard lock(g_mutex);
    if (g_sink)
        g_sink(message);
    else
        std::cerr << "warning: " << message << '\n';
}

} // namespace dpa::log
