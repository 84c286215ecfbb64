#pragma once

#include <string_view>

namespace clseg::log {

enum class Level { debug, info, warning, error, quiet };

void set_level(Level level);
Level level();

void debug(std::string_view message);
void info(std::string_view message);
void warning(std::string_view message);

} // namespace clseg::log
