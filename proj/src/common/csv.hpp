#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ehrgen {

// Minimal delimited-text table: header row plus string cells. No quoting;
// every file this project reads or writes holds plain codes, ids and dates.
class CsvTable {
 public:
  static CsvTable read(const std::filesystem::path& path, char delim = ',');
  static CsvTable parse(std::string_view text, const std::string& source_name, char delim = ',');

  const std::vector<std::string>& header() const { return header_; }
  size_t rows() const { return rows_.size(); }
  // Column index by name; throws ValidationError naming the file when absent.
  size_t column(std::string_view name) const;
  std::optional<size_t> find_column(std::string_view name) const;
  const std::string& cell(size_t row, size_t col) const { return rows_[row][col]; }

  // Typed accessors that report file, line and column on failure.
  int64_t int_cell(size_t row, size_t col) const;
  double double_cell(size_t row, size_t col) const;

  const std::string& source() const { return source_; }

 private:
  std::string source_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::vector<std::string> split(std::string_view s, char delim);
std::string_view trim(std::string_view s);
int64_t parse_int(std::string_view s, std::string_view what);
double parse_double(std::string_view s, std::string_view what);

// Reads a whole file; throws ValidationError naming the path if it cannot be opened.
std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temp file then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace ehrgen
