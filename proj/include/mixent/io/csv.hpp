#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mixent/error.hpp"
#include "mixent/gaussian.hpp"

namespace mixent::io {

/// Numeric table with an optional header line.
struct Table {
  std::vector<std::string> header;
  DataMatrix data;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace detail

/// Comma-separated numbers, '.' decimal, one optional header line that is
/// detected by containing a non-numeric cell. Blank lines are ignored. Rows
/// and columns in error messages are 1-based.
inline Table parse_csv(std::string_view text) {
  Table t;
  std::vector<std::vector<double>> rows;
  std::size_t ncols = 0;
  bool first = true;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    std::vector<double> vals(cells.size());
    std::size_t bad = cells.size();
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!detail::parse_double(cells[c], vals[c])) {
        bad = c;
        break;
      }
    }
    if (first) {
      first = false;
      ncols = cells.size();
      if (bad != cells.size()) {
        for (auto c : cells) t.header.emplace_back(c);
        continue;
      }
    }
    if (cells.size() != ncols) {
      throw DataError("row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                      " columns, expected " + std::to_string(ncols));
    }
    if (bad != cells.size()) {
      throw DataError("row " + std::to_string(line_no) + ", column " + std::to_string(bad + 1) + ": '" +
                      std::string(cells[bad]) + "' is not a finite number");
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw DataError("no data rows");
  t.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ncols));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < ncols; ++j) t.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return t;
}

inline Table read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_csv(ss.str());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

/// Shortest decimal text that reads back to exactly v.
inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw NumericalError("cannot format number");
  return std::string(buf, ptr);
}

inline std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (j) out += ',';
    out += t.header[j];
  }
  if (!t.header.empty()) out += '\n';
  for (Eigen::Index i = 0; i < t.data.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.data.cols(); ++j) {
      if (j) out += ',';
      out += format_double(t.data(i, j));
    }
    out += '\n';
  }
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("error writing '" + path + "'");
}

}  // namespace mixent::io
