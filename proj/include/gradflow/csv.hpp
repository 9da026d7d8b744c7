#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace gradflow::csv {

/// 17 significant digits, '.' separator: reads back to the same double.
std::string format_real(double x);
/// Shortest text that reads back to the same double.
std::string format_shortest(double x);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Index of a named column; throws gradflow::InvalidParameter if absent.
  std::size_t column(std::string_view name) const;
};

/// Reads a numeric CSV with a header line. Blank lines are skipped.
Table read(const std::string& path);
Table parse(std::string_view text);

void write_file(const std::string& path, std::string_view contents);

}  // namespace gradflow::csv
