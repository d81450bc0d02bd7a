#include "bib/kvtext.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bib/error.hpp"

namespace bib {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueDoc KeyValueDoc::parse(std::string_view text, const std::string& source) {
    KeyValueDoc doc;
    doc.source_ = source;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '#') {
            doc.comments_.emplace_back(doc.entries_.size(), std::string(trim(line.substr(1))));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw DatasetError(source + ":" + std::to_string(line_no) + ": expected `key = value`");
        }
        auto key = std::string(trim(line.substr(0, eq)));
        auto value = std::string(trim(line.substr(eq + 1)));
        if (key.empty()) {
            throw DatasetError(source + ":" + std::to_string(line_no) + ": empty key");
        }
        if (doc.contains(key)) {
            throw DatasetError(source + ":" + std::to_string(line_no) + ": duplicate key `" + key + "`");
        }
        doc.entries_.emplace_back(std::move(key), std::move(value));
    }
    return doc;
}

KeyValueDoc KeyValueDoc::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

void KeyValueDoc::set(std::string key, std::string value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    entries_.emplace_back(std::move(key), std::move(value));
}

void KeyValueDoc::comment(std::string text) { comments_.emplace_back(entries_.size(), std::move(text)); }

bool KeyValueDoc::contains(std::string_view key) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
}

std::optional<std::string> KeyValueDoc::get(std::string_view key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return v;
    }
    return std::nullopt;
}

const std::string& KeyValueDoc::require(std::string_view key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return v;
    }
    throw DatasetError(source_ + ": missing field `" + std::string(key) + "`");
}

std::int64_t KeyValueDoc::require_int(std::string_view key) const {
    return parse_int(require(key), key);
}

double KeyValueDoc::require_real(std::string_view key) const { return parse_real(require(key), key); }

bool KeyValueDoc::require_bool(std::string_view key) const { return parse_bool(require(key), key); }

std::string KeyValueDoc::to_string() const {
    std::string out;
    std::size_t c = 0;
    for (std::size_t i = 0; i <= entries_.size(); ++i) {
        while (c < comments_.size() && comments_[c].first == i) {
            out += "# " + comments_[c].second + "\n";
            ++c;
        }
        if (i < entries_.size()) out += entries_[i].first + " = " + entries_[i].second + "\n";
    }
    return out;
}

std::int64_t parse_int(std::string_view text, std::string_view what) {
    std::int64_t value = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw DatasetError("field `" + std::string(what) + "`: not an integer: `" + std::string(text) + "`");
    }
    return value;
}

double parse_real(std::string_view text, std::string_view what) {
    auto s = trim(text);
    bool negative = false;
    std::string_view body = s;
    if (!body.empty() && (body.front() == '-' || body.front() == '+')) {
        negative = body.front() == '-';
        body.remove_prefix(1);
    }
    if (body == "inf" || body == "infinity") {
        return negative ? -INFINITY : INFINITY;
    }
    if (body == "nan") return NAN;

    double value = 0.0;
    std::errc ec{};
    const char* ptr = nullptr;
    const auto* end = body.data() + body.size();
    if (body.size() > 2 && body[0] == '0' && (body[1] == 'x' || body[1] == 'X')) {
        auto r = std::from_chars(body.data() + 2, end, value, std::chars_format::hex);
        ec = r.ec;
        ptr = r.ptr;
    } else {
        auto r = std::from_chars(body.data(), end, value);
        ec = r.ec;
        ptr = r.ptr;
    }
    if (ec != std::errc{} || ptr != end || body.empty()) {
        throw DatasetError("field `" + std::string(what) + "`: not a real number: `" + std::string(text) + "`");
    }
    return negative ? -value : value;
}

bool parse_bool(std::string_view text, std::string_view what) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw DatasetError("field `" + std::string(what) + "`: expected true/false, got `" + std::string(text) + "`");
}

std::string format_hex(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    std::array<char, 64> buf{};
    const bool negative = std::signbit(value);
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), std::fabs(value),
                                         std::chars_format::hex);
    return std::string(negative ? "-0x" : "0x") + std::string(buf.data(), ptr);
}

std::string format_real(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), ptr);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw Error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace bib
