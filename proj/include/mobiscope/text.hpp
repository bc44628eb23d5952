#pragma once

// Small text helpers shared by the file formats: shortest round-trip number
// formatting, strict number parsing, and a minimal RFC-4180 CSV reader/writer.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mobiscope/error.hpp"

namespace mobiscope::text {

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
    // Shortest round-trip digits; plain notation for ordinary magnitudes.
    char buf[400];
    const double a = std::fabs(v);
    const bool plain = a == 0 || (a >= 1e-4 && a < 1e15);
    auto res = plain ? std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed)
                     : std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    std::int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::string trim(std::string_view s) {
    const auto* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

inline std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

/// Splits one CSV record. Quoted fields may not span lines.
inline std::vector<std::string> split_csv(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw FormatError("unterminated quote in CSV line");
    fields.push_back(std::move(cur));
    return fields;
}

/// A CSV table with a required header row. Lines starting with '#' are
/// metadata comments; they are collected verbatim and otherwise skipped.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> comments;

    /// Column index by case-insensitive name, or nullopt.
    std::optional<std::size_t> column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i].size() != name.size()) continue;
            bool eq = true;
            for (std::size_t k = 0; k < name.size() && eq; ++k) {
                eq = std::toupper(static_cast<unsigned char>(header[i][k])) ==
                     std::toupper(static_cast<unsigned char>(name[k]));
            }
            if (eq) return i;
        }
        return std::nullopt;
    }

    std::size_t require(std::string_view name, std::string_view what) const {
        auto c = column(name);
        if (!c) throw FormatError(std::string(what) + ": missing required column " + std::string(name));
        return *c;
    }
};

inline CsvTable read_csv(std::istream& in, std::string_view what) {
    CsvTable t;
    std::string line;
    bool have_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line.front() == '#') {
            t.comments.push_back(line);
            continue;
        }
        if (line.empty()) continue;
        auto fields = split_csv(line);
        if (!have_header) {
            for (auto& f : fields) f = trim(f);
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw FormatError(std::string(what) + ": line " + std::to_string(line_no) + " has " +
                              std::to_string(fields.size()) + " fields, header has " +
                              std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    if (in.bad()) throw Error(std::string(what) + ": read error");
    if (!have_header) throw FormatError(std::string(what) + ": missing header row");
    return t;
}

/// Metadata comment line: "# key=value key=value ..." in key order.
inline std::string meta_comment(const std::map<std::string, std::string>& meta) {
    std::string s = "# mobiscope";
    for (const auto& [k, v] : meta) s += " " + k + "=" + v;
    return s;
}

} // namespace mobiscope::text
