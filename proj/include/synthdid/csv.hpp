#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace synthdid {

/// Header plus string cells, as read from an RFC 4180 style CSV file.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> find_column(std::string_view name) const;
  /// Throws ConfigError naming the column when it is absent.
  std::size_t column(std::string_view name) const;
};

/// Parses CSV text. Quoted fields may contain commas, doubled quotes and
/// newlines. A trailing newline is optional; CRLF is accepted. Rows whose
/// width differs from the header raise ParseError.
CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::string& path);

/// Strict numeric parse of a whole cell (surrounding blanks allowed).
std::optional<double> parse_double(std::string_view cell);

/// Cells that count as missing: empty, "NA", "NaN", ".".
bool is_missing(std::string_view cell);

/// Shortest round-trip decimal rendering; identical bytes for identical values.
std::string format_double(double value);

/// Writes one CSV record, quoting fields that need it.
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace synthdid
