#pragma once

#include "evcs/csv.hpp"
#include "evcs/error.hpp"
#include "evcs/hash.hpp"

#include <charconv>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace evcs {

/// Flat `key = value` configuration. `#` starts a comment; blank lines are
/// ignored; later assignments override earlier ones.
class Config {
  public:
    Config() = default;

    static Config parse(std::string_view text, std::string const& source = "<config>")
    {
        Config cfg;
        std::istringstream in{std::string(text)};
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) {
                line.erase(hash);
            }
            const auto content = trim(line);
            if (content.empty()) {
                continue;
            }
            const auto eq = content.find('=');
            if (eq == std::string_view::npos) {
                throw IoError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
            }
            const auto key = trim(content.substr(0, eq));
            if (key.empty()) {
                throw IoError(source + ":" + std::to_string(lineno) + ": empty key");
            }
            cfg.values_[std::string(key)] = std::string(trim(content.substr(eq + 1)));
        }
        return cfg;
    }

    static Config load(std::filesystem::path const& path)
    {
        return parse(csv::read_file(path), path.string());
    }

    void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }

    [[nodiscard]] bool has(std::string const& key) const { return values_.count(key) != 0; }

    [[nodiscard]] std::string get_string(std::string const& key, std::string fallback) const
    {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    [[nodiscard]] double get_double(std::string const& key, double fallback) const
    {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        return to_number<double>(key, it->second);
    }

    [[nodiscard]] long long get_int(std::string const& key, long long fallback) const
    {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        return to_number<long long>(key, it->second);
    }

    [[nodiscard]] bool get_bool(std::string const& key, bool fallback) const
    {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        const auto& v = it->second;
        if (v == "true" || v == "1" || v == "yes") {
            return true;
        }
        if (v == "false" || v == "0" || v == "no") {
            return false;
        }
        throw IoError("config key '" + key + "': expected boolean, got '" + v + "'");
    }

    /// Whitespace- or comma-separated list of numbers.
    [[nodiscard]] std::vector<double> get_list(std::string const& key, std::vector<double> fallback) const
    {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        std::vector<double> out;
        std::string token;
        std::istringstream in(it->second);
        while (in >> token) {
            std::string_view t = token;
            while (!t.empty() && (t.back() == ',' || t.back() == ';')) {
                t.remove_suffix(1);
            }
            if (!t.empty()) {
                out.push_back(to_number<double>(key, std::string(t)));
            }
        }
        return out;
    }

    /// Keys that are not in `known`; used to reject typos.
    [[nodiscard]] std::vector<std::string> unknown_keys(std::vector<std::string> const& known) const
    {
        std::vector<std::string> out;
        for (auto const& [k, v] : values_) {
            bool found = false;
            for (auto const& kk : known) {
                found = found || kk == k;
            }
            if (!found) {
                out.push_back(k);
            }
        }
        return out;
    }

    /// Canonical text (sorted keys), the basis of the config hash.
    [[nodiscard]] std::string canonical() const
    {
        std::string out;
        for (auto const& [k, v] : values_) {
            out += k;
            out += '=';
            out += v;
            out += '\n';
        }
        return out;
    }

    [[nodiscard]] std::string hash() const { return hash_string(canonical()); }

  private:
    static std::string_view trim(std::string_view s)
    {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
            s.remove_prefix(1);
        }
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
            s.remove_suffix(1);
        }
        return s;
    }

    template <class T>
    static T to_number(std::string const& key, std::string const& v)
    {
        T out{};
        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || ptr != v.data() + v.size()) {
            throw IoError("config key '" + key + "': not a number: '" + v + "'");
        }
        return out;
    }

    std::map<std::string, std::string> values_;
};

} // namespace evcs
