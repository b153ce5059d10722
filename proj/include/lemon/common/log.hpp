#pragma once

#include <string>

namespace lemon::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

/// Messages below the threshold are dropped. Default: Warn.
void set_level(Level level);
Level level();

/// One line to stderr, prefixed with the level name. Thread-safe.
void write(Level level, const std::string& message);

inline void debug(const std::string& m) { write(Level::Debug, m); }
inline void info(const std::string& m) { write(Level::Info, m); }
inline void warn(const std::string& m) { write(Level::Warn, m); }
inline void error(const std::string& m) { write(Level::Error, m); }

}  // namespace lemon::log
