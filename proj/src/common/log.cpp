#include "lemon/common/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace lemon::log {

namespace {

std::atomic<Level> g_level{Level::Warn};
std::mutex g_mutex;

const char* name(Level l) {
    switch (l) {
        case Level::Debug: return "debug";
        case Level::Info: return "info";
        case Level::Warn: return "warn";
        case Level::Error: return "error";
        case Level::Off: break;
    }
    return "off";
}

}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void write(Level l, const std::string& message) {
    if (l < g_level.load() || l == Level::Off) return;
    std::lock_guard lock(g_mutex);
    std::cerr << "[" << name(l) << "] " << message << '\n';
}

}  // namespace lemon::log
