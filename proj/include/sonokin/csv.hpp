#ifndef SONOKIN_CSV_HPP
#define SONOKIN_CSV_HPP

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sonokin/common.hpp"

namespace sonokin {

// Minimal CSV support for the project's own file formats: comma-separated,
// header row, no quoting or embedded commas.

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based line number per row, for error reporting
  std::vector<std::size_t> line_numbers;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path);
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
    } else {
      if (fields.size() != table.header.size())
        fail(ErrorCode::MalformedRow,
             path + ":" + std::to_string(lineno) + ": expected " +
                 std::to_string(table.header.size()) + " fields, got " +
                 std::to_string(fields.size()));
      table.rows.push_back(std::move(fields));
      table.line_numbers.push_back(lineno);
    }
  }
  return table;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::MalformedRow, where + ": not a number: '" + s + "'");
  }
}

inline std::int64_t parse_int(const std::string& s, const std::string& where) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    fail(ErrorCode::MalformedRow, where + ": not an integer: '" + s + "'");
  return v;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) fail(ErrorCode::IoFailure, "cannot open " + path + " for write");
    path_ = path;
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }

  void close() {
    out_.close();
    if (!out_) fail(ErrorCode::IoFailure, "write failed: " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
};

}  // namespace sonokin

#endif  // SONOKIN_CSV_HPP
