#pragma once

#include "evcs/error.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace evcs::csv {

/// Splits one line on commas. Double-quoted fields may contain commas; `""`
/// inside quotes is a literal quote.
inline std::vector<std::string> split_line(std::string_view line)
{
    std::vector<std::string> out;
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
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

/// In-memory table with a header row. Column lookups by name produce a
/// diagnostic naming the missing column and the file.
class Table {
  public:
    Table(std::string source, std::vector<std::string> header) : source_{std::move(source)}, header_{std::move(header)}
    {
        for (std::size_t i = 0; i < header_.size(); ++i) {
            index_.emplace(header_[i], i);
        }
    }

    static Table read(std::filesystem::path const& path)
    {
        std::ifstream in(path);
        if (!in) {
            throw IoError("cannot open '" + path.string() + "'");
        }
        return parse(in, path.string());
    }

    static Table parse(std::istream& in, std::string source)
    {
        std::string line;
        if (!std::getline(in, line)) {
            throw ValidationError(source + ": missing header row");
        }
        Table t{std::move(source), split_line(line)};
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line == "\r") {
                continue;
            }
            auto row = split_line(line);
            if (row.size() != t.header_.size()) {
                throw ValidationError(t.source_ + ":" + std::to_string(lineno) + ": expected " +
                                      std::to_string(t.header_.size()) + " fields, got " +
                                      std::to_string(row.size()));
            }
            t.rows_.push_back(std::move(row));
        }
        return t;
    }

    [[nodiscard]] bool has(std::string_view name) const { return index_.count(std::string(name)) != 0; }

    [[nodiscard]] std::size_t column(std::string_view name) const
    {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) {
            throw ValidationError(source_ + ": missing required column '" + std::string(name) + "'");
        }
        return it->second;
    }

    /// Throws unless every listed column is present.
    void require(std::initializer_list<std::string_view> names) const
    {
        for (auto n : names) {
            (void)column(n);
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return rows_.size(); }
    [[nodiscard]] std::vector<std::string> const& row(std::size_t i) const { return rows_[i]; }
    [[nodiscard]] std::string const& at(std::size_t r, std::size_t c) const { return rows_[r][c]; }
    [[nodiscard]] std::string const& source() const noexcept { return source_; }

    [[nodiscard]] double number(std::size_t r, std::size_t c) const
    {
        const auto& s = rows_[r][c];
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size()) {
            throw ValidationError(source_ + ": row " + std::to_string(r + 2) + ", column '" + header_[c] +
                                  "': not a number: '" + s + "'");
        }
        return v;
    }

  private:
    std::string source_;
    std::vector<std::string> header_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::vector<std::string>> rows_;
};

/// Shortest round-trip representation of a double.
inline std::string fmt(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

/// Fixed-point formatting with `digits` decimals.
inline std::string fixed(double v, int digits)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
    return std::string(buf, ptr);
}

inline void write_file(std::filesystem::path const& path, std::string const& content)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    out << content;
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

inline std::string read_file(std::filesystem::path const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace evcs::csv
