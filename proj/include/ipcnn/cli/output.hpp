#pragma once

// CSV (RFC 4180, '.' decimal separator) and JSON writers for experiment
// outputs. Numbers print in the shortest form that parses back to the same
// double.

#include "ipcnn/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <concepts>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace ipcnn::cli {

inline std::string format_number(double x)
{
    if (std::isnan(x)) {
        return "nan";
    }
    if (std::isinf(x)) {
        return x > 0 ? "inf" : "-inf";
    }
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return {buf, r.ptr};
}

template <std::integral T>
std::string format_number(T x)
{
    return std::to_string(x);
}

inline double parse_number(const std::string& s)
{
    if (s == "nan") {
        return std::nan("");
    }
    if (s == "inf") {
        return INFINITY;
    }
    if (s == "-inf") {
        return -INFINITY;
    }
    double x = 0.0;
    const char* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, x);
    if (s.empty() || r.ec == std::errc::invalid_argument || r.ptr != end) {
        throw ParseError("not a number: '" + s + "'");
    }
    return x;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row)
    {
        if (row.size() != header.size()) {
            throw DimensionError("csv row has " + std::to_string(row.size()) + " fields, header has " +
                                 std::to_string(header.size()));
        }
        rows.push_back(std::move(row));
    }

    [[nodiscard]] std::size_t column(const std::string& name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return i;
            }
        }
        throw ParseError("csv has no column '" + name + "'");
    }

    friend bool operator==(const CsvTable&, const CsvTable&) = default;
};

namespace detail {

inline std::string csv_field(const std::string& f)
{
    if (f.find_first_of(",\"\r\n") == std::string::npos) {
        return f;
    }
    std::string out = "\"";
    for (char c : f) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + '"';
}

inline void append_line(std::string& out, const std::vector<std::string>& fields)
{
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) {
            out += ',';
        }
        out += csv_field(fields[i]);
    }
    out += "\r\n";
}

}  // namespace detail

inline std::string to_csv(const CsvTable& t)
{
    std::string out;
    detail::append_line(out, t.header);
    for (const auto& r : t.rows) {
        detail::append_line(out, r);
    }
    return out;
}

// Accepts CRLF or LF line ends and quoted fields with embedded separators.
inline CsvTable parse_csv(const std::string& text)
{
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool in_record = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            if (!field.empty()) {
                throw ParseError("csv: quote inside unquoted field at byte " + std::to_string(i));
            }
            quoted = true;
            in_record = true;
        } else if (c == ',') {
            record.push_back(std::move(field));
            field.clear();
            in_record = true;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
                ++i;
            }
            record.push_back(std::move(field));
            field.clear();
            records.push_back(std::move(record));
            record.clear();
            in_record = false;
        } else {
            field += c;
            in_record = true;
        }
    }
    if (quoted) {
        throw ParseError("csv: unterminated quoted field");
    }
    if (in_record) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }
    if (records.empty()) {
        throw ParseError("csv: missing header row");
    }
    CsvTable t;
    t.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != t.header.size()) {
            throw ParseError("csv: record " + std::to_string(r) + " has " +
                             std::to_string(records[r].size()) + " fields, expected " +
                             std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(records[r]));
    }
    return t;
}

inline std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

inline void write_csv(const std::filesystem::path& path, const CsvTable& t)
{
    write_text(path, to_csv(t));
}

inline CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path)); }

// nlohmann::json keeps object keys sorted, so the dump is canonical.
inline void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    write_text(path, j.dump(2) + "\n");
}

}  // namespace ipcnn::cli
