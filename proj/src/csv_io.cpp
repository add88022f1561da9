#include "mesr/csv_io.hpp"

#include "mesr/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mesr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  CsvTable table;
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto cells = split(t);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      std::ostringstream msg;
      msg << path.string() << ":" << lineno << ": expected " << table.header.size() << " cells, found "
          << cells.size();
      throw IoError(msg.str());
    }
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) throw IoError("'" + path.string() + "' has no header row");
  return table;
}

double parse_number(const std::string& cell, std::size_t row, std::size_t col) {
  // strtod handles inf/nan spellings and exponent forms uniformly.
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size()) {
    std::ostringstream msg;
    msg << "row " << row << ", column " << col << ": '" << cell << "' is not a number";
    throw IoError(msg.str());
  }
  return v;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace mesr
