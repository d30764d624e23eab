#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "msent/error.hpp"
#include "msent/io.hpp"

namespace msent {

/// Flat `section.key -> value` store read from a TOML-style text file.
///
/// Supported subset: `[section]` headers, `key = value` lines, `#` comments,
/// double-quoted strings, bare numbers and booleans. Values are kept as text
/// and converted on access.
class Config {
public:
    static Config parse(std::istream& in, const std::string& source = "config") {
        Config c;
        std::string section;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string where = source + " line " + std::to_string(line_no);
            std::string text = strip_comment(line);
            const auto t = io::trim(text);
            if (t.empty()) continue;
            if (t.front() == '[') {
                require(t.back() == ']' && t.size() > 2, ErrorKind::config,
                        where + ": malformed section header");
                section = std::string(io::trim(t.substr(1, t.size() - 2)));
                continue;
            }
            const auto eq = t.find('=');
            require(eq != std::string_view::npos, ErrorKind::config, where + ": expected 'key = value'");
            const auto key = io::trim(t.substr(0, eq));
            require(!key.empty(), ErrorKind::config, where + ": empty key");
            auto value = std::string(io::trim(t.substr(eq + 1)));
            if (value.size() >= 2 && value.front() == '"') {
                require(value.back() == '"', ErrorKind::config, where + ": unterminated string");
                value = value.substr(1, value.size() - 2);
            }
            const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
            require(!c.values_.contains(full), ErrorKind::duplicate, where + ": duplicate key '" + full + "'");
            c.values_[full] = value;
        }
        return c;
    }

    static Config load(const std::filesystem::path& path) {
        auto in = io::open_input(path);
        return parse(in, path.string());
    }

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    [[nodiscard]] bool has(const std::string& key) const { return values_.contains(key); }
    [[nodiscard]] const std::map<std::string, std::string>& values() const noexcept { return values_; }

    /// `section.key` is read from `<PREFIX>SECTION_KEY`; dots and dashes become underscores.
    void apply_env(std::string_view prefix, const std::vector<std::string>& keys,
                   const std::function<const char*(const char*)>& getenv_fn = &std::getenv) {
        for (const auto& key : keys) {
            const auto name = env_name(prefix, key);
            if (const char* v = getenv_fn(name.c_str())) values_[key] = v;
        }
    }

    static std::string env_name(std::string_view prefix, std::string_view key) {
        std::string name(prefix);
        for (char ch : key) {
            if (ch == '.' || ch == '-') name += '_';
            else name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        }
        return name;
    }

    /// Keys present here but not in `known`.
    [[nodiscard]] std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_)
            if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
        return out;
    }

    [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    [[nodiscard]] double get_double(const std::string& key, double fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : io::parse_double(it->second, "config key " + key);
    }

    [[nodiscard]] std::size_t get_size(const std::string& key, std::size_t fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const auto v = io::parse_int(it->second, "config key " + key);
        require(v >= 0, ErrorKind::config, "config key " + key + " must be non-negative");
        return static_cast<std::size_t>(v);
    }

    [[nodiscard]] std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        return get_size(key, static_cast<std::size_t>(fallback));
    }

    [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        fail(ErrorKind::config, "config key " + key + " expects true or false, got '" + it->second + "'");
    }

    /// Sorted `key = value` lines; the input to the config hash.
    [[nodiscard]] std::string canonical() const {
        std::ostringstream out;
        for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
        return out.str();
    }

private:
    static std::string strip_comment(const std::string& line) {
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) return line.substr(0, i);
        }
        return line;
    }

    std::map<std::string, std::string> values_;
};

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

}  // namespace msent
