#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "gridcascade/errors.hpp"

namespace gridcascade::csv {

// Minimal comma-separated reader: no quoting, UTF-8, '.' decimal separator.
struct Table {
    std::string file;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> row_lines;  // 1-based physical line of each row

    [[nodiscard]] std::ptrdiff_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
        return -1;
    }
};

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline Table parse(std::istream& in, const std::string& file) {
    Table t;
    t.file = file;
    std::string raw;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line = raw;
        if (lineno == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
        if (trim(line).empty()) continue;
        auto fields = split(line);
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size())
            throw ParseError(file, lineno,
                             "expected " + std::to_string(t.header.size()) + " fields, found " +
                                 std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
        t.row_lines.push_back(lineno);
    }
    if (!have_header) throw ParseError(file, 1, "missing header");
    return t;
}

inline Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    return parse(in, path);
}

inline double parse_double(std::string_view s, const Table& t, std::size_t row, std::string_view column) {
    double v = 0.0;
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (s.empty() || ec != std::errc() || ptr != last)
        throw ParseError(t.file, t.row_lines[row],
                         "invalid number '" + std::string(s) + "' in column " + std::string(column));
    return v;
}

inline long parse_int(std::string_view s, const Table& t, std::size_t row, std::string_view column) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError(t.file, t.row_lines[row],
                         "invalid integer '" + std::string(s) + "' in column " + std::string(column));
    return v;
}

// Round-trippable text for a double (17 significant digits).
inline std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace gridcascade::csv
