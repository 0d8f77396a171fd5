#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dermpipe {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based line number of each row in the source text.
  std::vector<int> lines;

  std::optional<std::size_t> column(std::string_view name) const;
  // Throws InvalidArgument naming the file when the column is absent.
  std::size_t require_column(std::string_view name, std::string_view source) const;
};

// Comma separated, optional double-quote quoting, LF or CRLF line ends.
// Blank lines are skipped. Rows must match the header width.
CsvTable parse_csv(std::string_view text, std::string_view source = "<csv>");
CsvTable read_csv(const std::string& path);

std::string csv_escape(std::string_view field);
void append_csv_row(std::string& out, const std::vector<std::string>& fields);

// Shortest round-trip decimal form.
std::string format_double(double v);
// Fixed-point with the given number of decimals.
std::string format_fixed(double v, int decimals);

}  // namespace dermpipe
