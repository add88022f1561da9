#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mesr {

/// Comma-separated table. Lines starting with '#' and blank lines are skipped;
/// the first remaining line is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of `name` in the header, or -1.
  int column(const std::string& name) const;
};

/// Throws IoError if the file cannot be read or rows are ragged.
CsvTable read_csv(const std::filesystem::path& path);

/// Parses a numeric cell; throws IoError with row/column context.
double parse_number(const std::string& cell, std::size_t row, std::size_t col);

/// printf("%.10g").
std::string format_number(double v);

}  // namespace mesr
