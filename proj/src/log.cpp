#include "clseg/log.hpp"

#include <atomic>
#include <iostream>

namespace clseg::log {
namespace {

std::atomic<Level> g_level{Level::warning};

void emit(Level at, std::string_view tag, std::string_view message) {
    if (at < g_level.load()) return;
    std::clog << "[clseg " << tag << "] " << message << '\n';
}

} // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

void debug(std::string_view message) { emit(Level::debug, "debug", message); }
void info(std::string_view message) { emit(Level::info, "info", message); }
void warning(std::string_view message) { emit(Level::warning, "warn", message); }

} // namespace clseg::log
