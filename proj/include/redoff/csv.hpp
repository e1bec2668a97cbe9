#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "redoff/error.hpp"

namespace redoff::csv {

/// Shortest decimal text that parses back to the identical double.
inline std::string format(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format(std::int64_t v) { return std::to_string(v); }
inline std::string format(int v) { return std::to_string(v); }

inline double parse_double(std::string_view text, const std::string& context) {
  double v = 0.0;
  auto first = text.data();
  auto last = text.data() + text.size();
  if (!text.empty() && text.front() == '+') ++first;
  auto res = std::from_chars(first, last, v);
  require(res.ec == std::errc() && res.ptr == last, ErrorKind::kSchema,
          "cannot parse number '" + std::string(text) + "' in " + context);
  return v;
}

inline std::int64_t parse_int(std::string_view text, const std::string& context) {
  std::int64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  require(res.ec == std::errc() && res.ptr == text.data() + text.size(), ErrorKind::kSchema,
          "cannot parse integer '" + std::string(text) + "' in " + context);
  return v;
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto next = line.find(sep, pos);
    if (next == std::string_view::npos) {
      out.emplace_back(line.substr(pos));
      break;
    }
    out.emplace_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

inline std::string join(const std::vector<std::string>& fields, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += sep;
    out += fields[i];
  }
  return out;
}

/// Header row plus data rows, all as text.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    fail(ErrorKind::kSchema, "missing column '" + name + "'");
  }

  std::string to_string() const {
    std::ostringstream os;
    os << join(header) << '\n';
    for (const auto& r : rows) os << join(r) << '\n';
    return os.str();
  }
};

inline Table parse_table(const std::string& text) {
  Table t;
  std::istringstream is(text);
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split(line);
    if (first) {
      t.header = std::move(fields);
      first = false;
      continue;
    }
    require(fields.size() == t.header.size(), ErrorKind::kSchema, "row width does not match header");
    t.rows.push_back(std::move(fields));
  }
  require(!first, ErrorKind::kSchema, "CSV has no header");
  return t;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write '" + path + "'");
  out << content;
  require(static_cast<bool>(out), ErrorKind::kIo, "write to '" + path + "' failed");
}

}  // namespace redoff::csv
