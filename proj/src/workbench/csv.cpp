#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "vsi/errors.hpp"
#include "vsi/workbench.hpp"

namespace vsi::workbench {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ','))
    cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',')
    cells.emplace_back();
  return cells;
}

} // namespace

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw Error("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out)
      throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_csv(const fs::path& path, const std::vector<std::string>& headers,
               const std::vector<std::vector<double>>& columns) {
  if (columns.size() != headers.size())
    throw InternalError("write_csv: header/column count mismatch");
  const std::size_t n = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns)
    if (c.size() != n)
      throw InternalError("write_csv: ragged columns");
  std::vector<std::vector<std::string>> rows(n);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& c : columns)
      rows[i].push_back(format_number(c[i]));
  write_csv(path, headers, rows);
}

void write_csv(const fs::path& path, const std::vector<std::string>& headers,
               const std::vector<std::vector<std::string>>& rows) {
  std::string text;
  auto append = [&](const std::vector<std::string>& cells) {
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (j)
        text += ',';
      text += cells[j];
    }
    text += '\n';
  };
  append(headers);
  for (const auto& r : rows) {
    if (r.size() != headers.size())
      throw InternalError("write_csv: row width differs from header");
    append(r);
  }
  write_text_atomic(path, text);
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in)
    throw IngestionError(path.string() + ": cannot open");
  CsvTable t;
  t.source = path;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty() || trim(line)[0] == '#')
      continue;
    auto cells = split(line);
    if (t.headers.empty()) {
      t.headers = std::move(cells);
      continue;
    }
    if (cells.size() != t.headers.size())
      throw IngestionError(path.string() + ": line " + std::to_string(lineno) + " has " +
                           std::to_string(cells.size()) + " fields, header has " +
                           std::to_string(t.headers.size()));
    t.rows.push_back(std::move(cells));
  }
  if (t.headers.empty())
    throw IngestionError(path.string() + ": missing header row");
  return t;
}

bool CsvTable::has(const std::string& column) const {
  for (const auto& h : headers)
    if (h == column)
      return true;
  return false;
}

std::size_t CsvTable::index(const std::string& column) const {
  for (std::size_t j = 0; j < headers.size(); ++j)
    if (headers[j] == column)
      return j;
  throw IngestionError(source.string() + ": missing column '" + column + "'");
}

std::vector<double> CsvTable::numbers(const std::string& column) const {
  const std::size_t j = index(column);
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string& cell = rows[i][j];
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cell.size() || !std::isfinite(v))
      throw IngestionError(source.string() + ": column '" + column + "' row " + std::to_string(i + 1) +
                           ": not a finite number: '" + cell + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> CsvTable::strings(const std::string& column) const {
  const std::size_t j = index(column);
  std::vector<std::string> out;
  for (const auto& r : rows)
    out.push_back(r[j]);
  return out;
}

} // namespace vsi::workbench
