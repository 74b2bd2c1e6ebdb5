#include "p2pm/text_format.hpp"

#include "p2pm/error.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>

namespace p2pm {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string_view strip_comment(std::string_view s) {
    const auto hash = s.find('#');
    return hash == std::string_view::npos ? s : s.substr(0, hash);
}

void expect_header(std::istream& in, const std::string& source, std::string_view expected_kind) {
    std::string first;
    if (!std::getline(in, first)) throw ParseError(source, 1, "empty file, expected '" + format_header(expected_kind) + "'");
    const auto text = trim(first);
    const std::string want = format_header(expected_kind);
    if (text != want) {
        throw ParseError(source, 1, "bad version line '" + std::string(text) + "', expected '" + want + "'");
    }
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream is{std::string(s)};
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return in;
}

}  // namespace

std::string format_header(std::string_view kind) {
    return "# p2pm-" + std::string(kind) + " v" + std::to_string(kFormatVersion);
}

const TextEntry* TextSection::find(std::string_view key) const {
    for (const auto& e : entries) {
        if (e.key == key) return &e;
    }
    return nullptr;
}

const TextSection* TextDocument::section(std::string_view name) const {
    for (const auto& s : sections) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

TextDocument parse_text_document(std::istream& in, const std::string& source, std::string_view expected_kind) {
    expect_header(in, source, expected_kind);
    TextDocument doc;
    doc.source = source;
    doc.kind = std::string(expected_kind);
    doc.sections.push_back(TextSection{"", 1, {}, {}});

    std::string raw;
    int line_no = 1;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto text = trim(strip_comment(raw));
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']' || text.size() < 3) throw ParseError(source, line_no, "malformed section header");
            std::string name(trim(text.substr(1, text.size() - 2)));
            if (doc.section(name) != nullptr) throw ParseError(source, line_no, "duplicate section [" + name + "]");
            doc.sections.push_back(TextSection{std::move(name), line_no, {}, {}});
            continue;
        }
        auto& current = doc.sections.back();
        if (const auto eq = text.find('='); eq != std::string_view::npos) {
            std::string key(trim(text.substr(0, eq)));
            std::string value(trim(text.substr(eq + 1)));
            if (key.empty()) throw ParseError(source, line_no, "entry without a key");
            if (current.find(key) != nullptr) throw ParseError(source, line_no, "duplicate key '" + key + "'");
            current.entries.push_back(TextEntry{line_no, std::move(key), std::move(value)});
        } else {
            current.rows.push_back(TextRow{line_no, split_ws(text)});
        }
    }
    return doc;
}

TextDocument read_text_document(const std::filesystem::path& path, std::string_view expected_kind) {
    auto in = open_input(path);
    return parse_text_document(in, path.string(), expected_kind);
}

std::size_t CsvTable::column(std::string_view name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError(source, 2, "missing column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(std::istream& in, const std::string& source, std::string_view expected_kind) {
    expect_header(in, source, expected_kind);
    CsvTable table;
    table.source = source;
    std::string raw;
    int line_no = 1;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto text = trim(raw);
        if (text.empty() || text.front() == '#') continue;
        auto fields = split(text, ',');
        if (table.header.empty()) {
            table.header = std::move(fields);
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw ParseError(source, line_no,
                             "expected " + std::to_string(table.header.size()) + " fields, found " +
                                 std::to_string(fields.size()));
        }
        table.rows.push_back(TextRow{line_no, std::move(fields)});
    }
    if (table.header.empty()) throw ParseError(source, line_no, "missing column header");
    return table;
}

CsvTable read_csv(const std::filesystem::path& path, std::string_view expected_kind) {
    auto in = open_input(path);
    return parse_csv(in, path.string(), expected_kind);
}

double parse_double(std::string_view text, const std::string& source, int line, std::string_view field) {
    const std::string s(trim(text));
    if (s.empty()) throw ParseError(source, line, "field '" + std::string(field) + "' is empty");
    char* end = nullptr;
    errno = 0;
    const double value = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(value)) {
        throw ParseError(source, line, "field '" + std::string(field) + "': '" + s + "' is not a finite number");
    }
    return value;
}

long parse_int(std::string_view text, const std::string& source, int line, std::string_view field) {
    const auto s = trim(text);
    long value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ParseError(source, line, "field '" + std::string(field) + "': '" + std::string(s) + "' is not an integer");
    }
    return value;
}

bool parse_bool(std::string_view text, const std::string& source, int line, std::string_view field) {
    const auto s = trim(text);
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
    throw ParseError(source, line, "field '" + std::string(field) + "': '" + std::string(s) + "' is not a boolean");
}

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return ec == std::errc{} ? std::string(buf, ptr) : std::to_string(value);
}

std::string format_fixed(double value, int digits) {
    if (value == 0.0) value = 0.0;  // drop negative zero
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, value);
    std::string s(buf);
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

}  // namespace p2pm
