#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctlab {

/// Minimal RFC-4180-ish table: a header row and string cells. Cells are quoted
/// on output only when they contain a comma, quote or newline.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column; throws SchemaError naming the column if absent.
  std::size_t column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
std::string write_csv(const CsvTable& table);
/// One line (with trailing newline), quoted like write_csv.
std::string csv_row(const std::vector<std::string>& cells);

/// Shortest decimal form that round-trips the double.
std::string format_number(double v);
std::string format_fixed(double v, int decimals);
std::string format_optional(const std::optional<double>& v);

std::optional<double> parse_optional_number(std::string_view cell, std::string_view column);
double parse_number(std::string_view cell, std::string_view column);
int parse_int(std::string_view cell, std::string_view column);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace ctlab
