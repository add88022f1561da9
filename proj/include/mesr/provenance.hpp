#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

namespace mesr {

/// Written as leading '#' comment lines in CSV/SVG and as an object in JSON.
struct Provenance {
  std::string tool = "mesr";
  std::string version;
  std::string command;
  std::string config_hash;
  std::string timestamp;
};

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fingerprint(std::string_view text);

/// Library version string.
std::string_view library_version();

/// Fills version and a UTC ISO-8601 timestamp. SOURCE_DATE_EPOCH, when set, pins the timestamp.
Provenance make_provenance(std::string command, std::string config_hash);

void write_comment_header(std::ostream& os, const Provenance& p, std::string_view prefix = "# ");

}  // namespace mesr
