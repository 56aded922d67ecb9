#ifndef MESHFL_UTIL_HPP
#define MESHFL_UTIL_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace meshfl {

// Raised for anything wrong with a scenario/config/trace file. The CLI maps
// this to exit code 1; every other exception maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised for failures during a run (I/O, unreachable destinations, ...).
class RuntimeFault : public std::runtime_error {
 public:
  explicit RuntimeFault(const std::string& msg) : std::runtime_error(msg) {}
};

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, silent = 4 };

// Global log threshold, initialized from the MESHFL_LOG environment variable
// (debug|info|warn|error|silent). Logging goes to stderr only, so run
// artifacts are never polluted.
LogLevel log_level();
void set_log_level(LogLevel lvl);
void log_msg(LogLevel lvl, const std::string& msg);

inline void log_debug(const std::string& m) { log_msg(LogLevel::debug, m); }
inline void log_info(const std::string& m) { log_msg(LogLevel::info, m); }
inline void log_warn(const std::string& m) { log_msg(LogLevel::warn, m); }
inline void log_error(const std::string& m) { log_msg(LogLevel::error, m); }

// Shortest decimal representation that round-trips the double, always with a
// decimal point or exponent so CSV columns are unambiguously real-valued
// (0 -> "0.0", 39 -> "39.0", -55 -> "-55.0").
std::string fmt_double(double v);

// FNV-1a 64-bit over raw bytes; used for artifact manifests and seed-stream
// label hashing.
std::uint64_t fnv1a64(std::string_view data);
std::string to_hex(std::uint64_t v);

std::vector<std::string> split(std::string_view s, char sep);

}  // namespace meshfl

#endif
