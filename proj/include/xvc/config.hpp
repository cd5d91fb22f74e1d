// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Plain-text configuration: `key = value` lines grouped under optional
// `[section]` headers. Sections may repeat (e.g. one `[box]` per primitive).
// `#` starts a comment. Keys before the first header belong to the global
// section, whose name is empty.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace xvc {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline double parse_double(std::string_view s, const std::string &what) {
    s = trim(s);
    // from_chars for double is available in libstdc++ 11.
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError(what + ": '" + std::string(s) + "' is not a number");
    }
    return v;
}

inline std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == ',' || s[i] == ' ' || s[i] == '\t') {
            auto tok = trim(s.substr(start, i - start));
            if (!tok.empty()) {
                out.push_back(tok);
            }
            start = i + 1;
        }
    }
    return out;
}

} // namespace detail

class ConfigSection {
  public:
    ConfigSection() = default;
    explicit ConfigSection(std::string name) : name_(std::move(name)) {}

    const std::string &name() const { return name_; }
    const std::vector<std::pair<std::string, std::string>> &entries() const { return entries_; }

    /// Sets a key, replacing an existing value in place.
    void set(const std::string &key, std::string value) {
        for (auto &[k, v] : entries_) {
            if (k == key) {
                v = std::move(value);
                return;
            }
        }
        entries_.emplace_back(key, std::move(value));
    }

    bool has(const std::string &key) const { return get(key).has_value(); }

    std::optional<std::string> get(const std::string &key) const {
        for (const auto &[k, v] : entries_) {
            if (k == key) {
                return v;
            }
        }
        return std::nullopt;
    }

    std::string get_string(const std::string &key, const std::string &fallback) const {
        return get(key).value_or(fallback);
    }

    std::string require_string(const std::string &key) const {
        auto v = get(key);
        if (!v) {
            throw ConfigError(where() + ": missing key '" + key + "'");
        }
        return *v;
    }

    double require_double(const std::string &key) const {
        return detail::parse_double(require_string(key), where() + "." + key);
    }

    double get_double(const std::string &key, double fallback) const {
        auto v = get(key);
        return v ? detail::parse_double(*v, where() + "." + key) : fallback;
    }

    long get_int(const std::string &key, long fallback) const {
        auto v = get(key);
        if (!v) {
            return fallback;
        }
        const double d = detail::parse_double(*v, where() + "." + key);
        if (d != static_cast<double>(static_cast<long>(d))) {
            throw ConfigError(where() + "." + key + ": expected an integer, got '" + *v + "'");
        }
        return static_cast<long>(d);
    }

    bool get_bool(const std::string &key, bool fallback) const {
        auto v = get(key);
        if (!v) {
            return fallback;
        }
        if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") {
            return true;
        }
        if (*v == "false" || *v == "0" || *v == "no" || *v == "off") {
            return false;
        }
        throw ConfigError(where() + "." + key + ": expected a boolean, got '" + *v + "'");
    }

    /// Comma- or whitespace-separated numbers.
    std::vector<double> get_doubles(const std::string &key) const {
        std::vector<double> out;
        if (auto v = get(key)) {
            for (auto tok : detail::split_list(*v)) {
                out.push_back(detail::parse_double(tok, where() + "." + key));
            }
        }
        return out;
    }

    std::vector<double> require_doubles(const std::string &key, std::size_t count) const {
        auto out = get_doubles(key);
        if (out.size() != count) {
            throw ConfigError(where() + "." + key + ": expected " + std::to_string(count) + " values, got " +
                              std::to_string(out.size()));
        }
        return out;
    }

  private:
    std::string where() const { return name_.empty() ? std::string("[global]") : "[" + name_ + "]"; }

    std::string name_;
    std::vector<std::pair<std::string, std::string>> entries_;
};

class Config {
  public:
    Config() { sections_.emplace_back(""); }

    static Config parse(std::string_view text) {
        Config cfg;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const auto nl = text.find('\n', pos);
            std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
            pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string_view::npos) {
                line = line.substr(0, hash);
            }
            line = detail::trim(line);
            if (line.empty()) {
                continue;
            }
            if (line.front() == '[') {
                if (line.back() != ']' || line.size() < 3) {
                    throw ConfigError("config line " + std::to_string(line_no) + ": malformed section header");
                }
                cfg.sections_.emplace_back(std::string(detail::trim(line.substr(1, line.size() - 2))));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) {
                throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
            }
            const auto key = detail::trim(line.substr(0, eq));
            if (key.empty()) {
                throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
            }
            cfg.sections_.back().set(std::string(key), std::string(detail::trim(line.substr(eq + 1))));
        }
        return cfg;
    }

    static Config load(const std::filesystem::path &path) {
        std::ifstream in(path);
        if (!in) {
            throw ConfigError("cannot open config " + path.string());
        }
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    ConfigSection &global() { return sections_.front(); }
    const ConfigSection &global() const { return sections_.front(); }

    /// First section with `name`, or an empty placeholder.
    const ConfigSection &section(const std::string &name) const {
        for (const auto &s : sections_) {
            if (s.name() == name) {
                return s;
            }
        }
        static const ConfigSection empty;
        return empty;
    }

    /// First section with `name`, created when absent.
    ConfigSection &section_mut(const std::string &name) {
        for (auto &s : sections_) {
            if (s.name() == name) {
                return s;
            }
        }
        return sections_.emplace_back(name);
    }

    std::vector<const ConfigSection *> sections(const std::string &name) const {
        std::vector<const ConfigSection *> out;
        for (const auto &s : sections_) {
            if (s.name() == name) {
                out.push_back(&s);
            }
        }
        return out;
    }

    const std::vector<ConfigSection> &all() const { return sections_; }

    /// Normalized text; equal configs give equal strings.
    std::string canonical() const {
        std::string out;
        for (const auto &s : sections_) {
            if (s.entries().empty() && s.name().empty()) {
                continue;
            }
            out += "[" + s.name() + "]\n";
            for (const auto &[k, v] : s.entries()) {
                out += k + "=" + v + "\n";
            }
        }
        return out;
    }

    /// 64-bit FNV-1a of canonical(), as 16 hex digits.
    std::string hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : canonical()) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        static constexpr char hex[] = "0123456789abcdef";
        std::string s(16, '0');
        for (int i = 15; i >= 0; --i) {
            s[static_cast<std::size_t>(i)] = hex[h & 0xf];
            h >>= 4;
        }
        return s;
    }

  private:
    std::vector<ConfigSection> sections_;
};

} // namespace xvc
