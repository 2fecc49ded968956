#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace disentangle::csv {

/// Splits one comma-separated line; fields are trimmed of surrounding blanks.
/// No quoting support: fields must not contain commas.
std::vector<std::string> split(std::string_view line);

/// Reads a file with a header row. Blank lines and lines starting with '#' are
/// skipped.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;

  /// Column index by name; throws DataError naming the source when missing.
  std::size_t column(std::string_view name) const;
  std::string source;
};

Table read(std::istream& in, std::string source);
Table read_file(const std::string& path);

double to_double(std::string_view text, std::string_view what);
long long to_integer(std::string_view text, std::string_view what);

/// Shortest representation that parses back to the identical double.
std::string format_double(double value);

}  // namespace disentangle::csv
