#include "dermpipe/csv.hpp"

#include <charconv>
#include <cstdio>

#include "dermpipe/errors.hpp"
#include "dermpipe/fileio.hpp"

namespace dermpipe {

std::optional<std::size_t> CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t CsvTable::require_column(std::string_view name, std::string_view source) const {
  if (auto idx = column(name)) return *idx;
  throw PipelineError(ErrorKind::InvalidArgument,
                      std::string(source) + ": missing column '" + std::string(name) + "'");
}

CsvTable parse_csv(std::string_view text, std::string_view source) {
  CsvTable table;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool row_has_content = false;
  int line = 1;
  int row_line = 1;

  const auto finish_row = [&] {
    fields.push_back(std::move(field));
    field.clear();
    if (row_has_content) {
      if (table.header.empty()) {
        table.header = std::move(fields);
        if (!table.header.empty() && table.header[0].rfind("\xEF\xBB\xBF", 0) == 0) {
          table.header[0].erase(0, 3);
        }
      } else {
        if (fields.size() != table.header.size()) {
          throw PipelineError(ErrorKind::InvalidArgument,
                              std::string(source) + ":" + std::to_string(row_line) + ": expected " +
                                  std::to_string(table.header.size()) + " fields, found " +
                                  std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
        table.lines.push_back(row_line);
      }
    }
    fields = {};
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        fields.push_back(std::move(field));
        field.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        finish_row();
        ++line;
        row_line = line;
        break;
      default:
        field.push_back(ch);
        row_has_content = true;
    }
  }
  if (in_quotes) throw PipelineError(ErrorKind::InvalidArgument, std::string(source) + ": unterminated quote");
  if (row_has_content || !field.empty()) finish_row();
  if (table.header.empty()) throw PipelineError(ErrorKind::InvalidArgument, std::string(source) + ": empty CSV");
  return table;
}

CsvTable read_csv(const std::string& path) { return parse_csv(read_file(path), path); }

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

void append_csv_row(std::string& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += csv_escape(fields[i]);
  }
  out.push_back('\n');
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace dermpipe
