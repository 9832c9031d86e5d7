#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kmf::csv {

/// Comma-separated table with a header row. Blank lines and lines starting with '#' are skipped.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    /// 1-based source line of each row, for error messages.
    std::vector<std::size_t> lines;
    std::string source;

    std::optional<std::size_t> column(std::string_view name) const;
    /// Throws ParseError when the column is missing.
    std::size_t require(std::string_view name) const;
    /// Parses a cell as a finite double; throws ParseError with the line number.
    double number(std::size_t row, std::size_t col) const;
};

Table read(const std::string& path);
Table parse(std::string_view text, std::string source = "<memory>");

/// Parses a whole token as a double; nullopt on failure.
std::optional<double> to_double(std::string_view token);

/// Shortest representation that reads back to the same double.
std::string format_double(double v);

/// Writes text to path, creating parent directories. Throws an I/O error on failure.
void write_file(const std::string& path, std::string_view text);
std::string read_file(const std::string& path);

}  // namespace kmf::csv
