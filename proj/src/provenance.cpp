#include "mesr/provenance.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <ostream>

#ifndef MESR_VERSION
#define MESR_VERSION "0.0.0"
#endif

namespace mesr {

std::string fingerprint(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string_view library_version() { return MESR_VERSION; }

Provenance make_provenance(std::string command, std::string config_hash) {
  Provenance p;
  p.version = std::string(library_version());
  p.command = std::move(command);
  p.config_hash = std::move(config_hash);
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) now = static_cast<std::time_t>(std::atoll(epoch));
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  p.timestamp = buf;
  return p;
}

void write_comment_header(std::ostream& os, const Provenance& p, std::string_view prefix) {
  os << prefix << "tool: " << p.tool << ' ' << p.version << '\n';
  if (!p.command.empty()) os << prefix << "command: " << p.command << '\n';
  if (!p.config_hash.empty()) os << prefix << "config_hash: " << p.config_hash << '\n';
  os << prefix << "timestamp: " << p.timestamp << '\n';
}

}  // namespace mesr
