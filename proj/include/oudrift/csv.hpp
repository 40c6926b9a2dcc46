#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "oudrift/error.hpp"

// Flat CSV output: UTF-8, comma separated, '.' decimal point, one schema
// comment line followed by a header row. Numbers are written with
// std::to_chars (shortest round-trip form), which never consults the locale.
namespace oudrift::csv {

inline constexpr std::string_view kSchemaLine = "# ou-drift-bench csv v1";

inline std::string format(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format(std::int64_t v) { return std::to_string(v); }
inline std::string format(std::uint64_t v) { return std::to_string(v); }
inline std::string format(int v) { return std::to_string(v); }
inline std::string format(bool v) { return v ? "true" : "false"; }
inline std::string format(std::string_view v) { return std::string(v); }
inline std::string format(const char* v) { return std::string(v); }
inline std::string format(const std::string& v) { return v; }

class Writer {
public:
  explicit Writer(std::vector<std::string> header) : header_(std::move(header)) {
    out_ << kSchemaLine << '\n';
    write_fields(header_);
  }

  template <class... Fields>
  void row(const Fields&... fields) {
    static_assert(sizeof...(Fields) > 0);
    std::vector<std::string> cells{format(fields)...};
    if (cells.size() != header_.size())
      throw CsvError("row has " + std::to_string(cells.size()) + " fields, header has " +
                     std::to_string(header_.size()));
    write_fields(cells);
    ++rows_;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::string str() const { return out_.str(); }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CsvError("cannot open " + path + " for writing");
    f << out_.str();
    if (!f) throw CsvError("failed writing " + path);
  }

private:
  void write_fields(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].find_first_of(",\"\n") != std::string::npos)
        throw CsvError("field contains a separator: " + fields[i]);
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }

  std::vector<std::string> header_;
  std::ostringstream out_;
  std::size_t rows_ = 0;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw CsvError("no column named " + std::string(name));
  }

  double number(std::size_t row, std::string_view name) const {
    const auto& cell = rows.at(row).at(column(name));
    double v = 0.0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size())
      throw CsvError("not a number: " + cell);
    return v;
  }
};

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// Parses text written by Writer; rejects a missing or unknown schema line.
inline Table parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kSchemaLine)
    throw CsvError("unsupported or missing schema line: '" + line + "'");
  Table t;
  if (!std::getline(in, line)) throw CsvError("missing header row");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != t.header.size()) throw CsvError("ragged row: " + line);
    t.rows.push_back(std::move(fields));
  }
  return t;
}

inline Table read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CsvError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

} // namespace oudrift::csv
