#include "ctlab/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ctlab/core.hpp"

namespace ctlab {

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error(ErrorCode::SchemaError, "missing column '" + std::string(name) + "'");
}

CsvTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> lines;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"': quoted = true; any = true; break;
      case ',': row.push_back(std::move(cell)); cell.clear(); any = true; break;
      case '\r': break;
      case '\n':
        if (any || !cell.empty()) {
          row.push_back(std::move(cell));
          lines.push_back(std::move(row));
        }
        row.clear();
        cell.clear();
        any = false;
        break;
      default: cell.push_back(ch); any = true;
    }
  }
  if (any || !cell.empty()) {
    row.push_back(std::move(cell));
    lines.push_back(std::move(row));
  }
  CsvTable table;
  if (lines.empty()) return table;
  table.header = std::move(lines.front());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].size() != table.header.size()) {
      throw Error(ErrorCode::SchemaError, "row " + std::to_string(i) + " has " +
                                              std::to_string(lines[i].size()) + " cells, expected " +
                                              std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(lines[i]));
  }
  return table;
}

namespace {

void write_cell(std::string& out, const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) {
    out += cell;
    return;
  }
  out.push_back('"');
  for (char ch : cell) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
}

void write_row(std::string& out, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out.push_back(',');
    write_cell(out, row[i]);
  }
  out.push_back('\n');
}

}  // namespace

std::string csv_row(const std::vector<std::string>& cells) {
  std::string out;
  write_row(out, cells);
  return out;
}

std::string write_csv(const CsvTable& table) {
  std::string out;
  write_row(out, table.header);
  for (const auto& row : table.rows) write_row(out, row);
  return out;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (s.starts_with("-") && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

std::optional<double> parse_optional_number(std::string_view cell, std::string_view column) {
  if (cell.empty() || cell == "NA") return std::nullopt;
  return parse_number(cell, column);
}

double parse_number(std::string_view cell, std::string_view column) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
    throw Error(ErrorCode::SchemaError,
                "column '" + std::string(column) + "': not a number '" + std::string(cell) + "'");
  }
  return v;
}

int parse_int(std::string_view cell, std::string_view column) {
  int v = 0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
    throw Error(ErrorCode::SchemaError,
                "column '" + std::string(column) + "': not an integer '" + std::string(cell) + "'");
  }
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NoData, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

}  // namespace ctlab
