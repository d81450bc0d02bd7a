#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bib {

// Line-oriented `key = value` text shared by manifests, scheme files and run
// configs. `#` starts a comment line; blank lines are ignored; keys are unique.
class KeyValueDoc {
public:
    static KeyValueDoc parse(std::string_view text, const std::string& source = "<text>");
    static KeyValueDoc load(const std::filesystem::path& path);

    void set(std::string key, std::string value);
    void comment(std::string text);

    bool contains(std::string_view key) const;
    std::optional<std::string> get(std::string_view key) const;
    const std::string& require(std::string_view key) const;

    std::int64_t require_int(std::string_view key) const;
    double require_real(std::string_view key) const;
    bool require_bool(std::string_view key) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    const std::string& source() const { return source_; }

    std::string to_string() const;

private:
    std::string source_;
    std::vector<std::pair<std::string, std::string>> entries_;
    std::vector<std::pair<std::size_t, std::string>> comments_;  // (position, text)
};

std::int64_t parse_int(std::string_view text, std::string_view what);
double parse_real(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);

/// Hex-float rendering; exact for every finite double, "inf"/"-inf"/"nan" otherwise.
std::string format_hex(double value);

/// Shortest decimal that round-trips.
std::string format_real(double value);

/// Writes to `path.tmp` and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace bib
