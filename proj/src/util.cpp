#include "docnli/util.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "docnli/errors.hpp"

namespace docnli {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IOError("cannot open file for reading: " + path);
  }
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IOError("cannot open file for writing: " + path);
  }
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) {
    throw IOError("short write: " + path);
  }
}

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_string(const std::string& s) {
  // FNV-1a, pinned so streams are stable across platforms
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("DOCNLI_LOG");
    if (env == nullptr) return LogLevel::Warn;
    std::string v(env);
    if (v == "debug") return LogLevel::Debug;
    if (v == "info") return LogLevel::Info;
    if (v == "error") return LogLevel::Error;
    return LogLevel::Warn;
  }();
  return level;
}

void log(LogLevel level, const std::string& message) {
  if (static_cast<int>(level) < static_cast<int>(log_level())) return;
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << "\n";
}

}  // namespace docnli
