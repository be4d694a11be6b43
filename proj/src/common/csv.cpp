#include "common/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "common/errors.hpp"

namespace ehrgen {

std::vector<std::string> split(std::string_view s, char delim) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '\n'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

int64_t parse_int(std::string_view s, std::string_view what) {
  s = trim(s);
  int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ValidationError(std::string(what) + ": expected integer, got '" + std::string(s) + "'");
  }
  return v;
}

double parse_double(std::string_view s, std::string_view what) {
  std::string tmp(trim(s));
  try {
    size_t used = 0;
    double v = std::stod(tmp, &used);
    if (used != tmp.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ValidationError(std::string(what) + ": expected number, got '" + tmp + "'");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write file: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw RuntimeFailure("short write: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw RuntimeFailure("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

CsvTable CsvTable::read(const std::filesystem::path& path, char delim) {
  return parse(read_file(path), path.string(), delim);
}

CsvTable CsvTable::parse(std::string_view text, const std::string& source_name, char delim) {
  CsvTable t;
  t.source_ = source_name;
  size_t line_no = 0;
  size_t start = 0;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    start = end + 1;
    ++line_no;
    if (trim(line).empty()) {
      if (end == text.size()) break;
      continue;
    }
    auto cells = split(line, delim);
    for (auto& c : cells) c = std::string(trim(c));
    if (t.header_.empty()) {
      t.header_ = std::move(cells);
    } else {
      if (cells.size() != t.header_.size()) {
        throw ValidationError(source_name + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(t.header_.size()) + " fields, got " + std::to_string(cells.size()));
      }
      t.rows_.push_back(std::move(cells));
    }
    if (end == text.size()) break;
  }
  if (t.header_.empty()) throw ValidationError(source_name + ": missing header row");
  return t;
}

std::optional<size_t> CsvTable::find_column(std::string_view name) const {
  for (size_t i = 0; i < header_.size(); ++i)
    if (header_[i] == name) return i;
  return std::nullopt;
}

size_t CsvTable::column(std::string_view name) const {
  if (auto c = find_column(name)) return *c;
  throw ValidationError(source_ + ": missing column '" + std::string(name) + "'");
}

int64_t CsvTable::int_cell(size_t row, size_t col) const {
  // +2: one for the header, one for 1-based numbering (blank lines are not counted).
  return parse_int(rows_[row][col], source_ + " row " + std::to_string(row + 2) + " column " + header_[col]);
}

double CsvTable::double_cell(size_t row, size_t col) const {
  return parse_double(rows_[row][col], source_ + " row " + std::to_string(row + 2) + " column " + header_[col]);
}

}  // namespace ehrgen
