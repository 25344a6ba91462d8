#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pintent/error.hpp"

namespace pintent {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::io, "error while reading '" + path + "'");
  return bytes;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "error while writing '" + path + "'");
}

/// 64-bit FNV-1a over the bytes, as 16 lowercase hex digits. Used for
/// manifest digests and dataset identifiers, not for security.
inline std::string fingerprint(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline nlohmann::json parse_json_file(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, "'" + path + "' is not valid JSON: " + e.what());
  }
}

/// Stable on-disk JSON rendering: two-space indent and a trailing newline.
inline std::string render_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

/// Checks the {"format", "version"} header every persisted document carries.
inline void check_schema(const nlohmann::json& doc, const std::string& format, int version) {
  if (!doc.is_object() || !doc.contains("format") || doc.at("format") != format)
    fail(ErrorKind::schema_version, "expected a '" + format + "' document");
  if (!doc.contains("version") || doc.at("version") != version)
    fail(ErrorKind::schema_version, "unsupported '" + format + "' version (expected " + std::to_string(version) + ")");
}

}  // namespace pintent
