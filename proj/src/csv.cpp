#include "kmf/csv.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "kmf/error.hpp"

namespace kmf::csv {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        cells.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

}  // namespace

std::optional<std::size_t> Table::column(std::string_view name) const {
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == name) return c;
    }
    return std::nullopt;
}

std::size_t Table::require(std::string_view name) const {
    if (auto c = column(name)) return *c;
    throw ParseError(1, fmt::format("{}: missing column '{}'", source, name));
}

double Table::number(std::size_t row, std::size_t col) const {
    const auto v = to_double(rows[row][col]);
    if (!v) {
        throw ParseError(lines[row], fmt::format("{}:{}: '{}' is not a finite number (column '{}')", source, lines[row],
                                                 rows[row][col], header[col]));
    }
    return *v;
}

std::optional<double> to_double(std::string_view token) {
    token = trim(token);
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

std::string format_double(double v) { return fmt::format("{}", v); }

Table parse(std::string_view text, std::string source) {
    Table table;
    table.source = std::move(source);
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        auto cells = split(line);
        if (table.header.empty()) {
            table.header = std::move(cells);
            continue;
        }
        if (cells.size() != table.header.size()) {
            throw ParseError(line_no, fmt::format("{}:{}: expected {} fields, found {}", table.source, line_no,
                                                  table.header.size(), cells.size()));
        }
        table.rows.push_back(std::move(cells));
        table.lines.push_back(line_no);
    }
    if (table.header.empty()) throw ParseError(line_no, fmt::format("{}: no header row", table.source));
    return table;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error(fmt::format("cannot open '{}' for reading", path));
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Table read(const std::string& path) { return parse(read_file(path), path); }

void write_file(const std::string& path, std::string_view text) {
    const std::filesystem::path p(path);
    std::error_code ec;
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error(fmt::format("cannot open '{}' for writing", path));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw io_error(fmt::format("failed writing '{}'", path));
}

}  // namespace kmf::csv
