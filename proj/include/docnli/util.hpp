#pragma once

#include <cstdint>
#include <string>

namespace docnli {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// Deterministic 64-bit mix used wherever independent random streams are
// derived from a base seed (per-document scores, per-format shuffles).
std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_string(const std::string& s);

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

// Level comes from the DOCNLI_LOG env var (debug|info|warn|error), default warn.
LogLevel log_level();
void log(LogLevel level, const std::string& message);

inline void log_warn(const std::string& m) { log(LogLevel::Warn, m); }
inline void log_info(const std::string& m) { log(LogLevel::Info, m); }
inline void log_debug(const std::string& m) { log(LogLevel::Debug, m); }

}  // namespace docnli
