#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gmix/errors.hpp"
#include "gmix/io/container.hpp"

namespace gmix::io {

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// RFC 4180 field quoting.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

using CsvRow = std::vector<std::string>;
using CsvMeta = std::vector<std::pair<std::string, std::string>>;

/// CSV text with a leading "# key: value" comment block.
inline std::string csv_text(const CsvMeta& meta, const CsvRow& header, const std::vector<CsvRow>& rows) {
  std::string out;
  for (const auto& [k, v] : meta) out += "# " + k + ": " + v + "\r\n";
  auto line = [&](const CsvRow& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += ',';
      out += csv_field(r[i]);
    }
    out += "\r\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

inline void write_csv(const std::filesystem::path& path, const CsvMeta& meta, const CsvRow& header,
                      const std::vector<CsvRow>& rows) {
  write_bytes(path, csv_text(meta, header, rows));
}

}  // namespace gmix::io
