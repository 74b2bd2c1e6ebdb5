#pragma once

// Readers for the two text layouts used by every p2pm file.
//
// Keyed text (networks, scenarios, diagnostics):
//
//   # p2pm-<kind> v1          first line, mandatory
//   key = value               root entries
//   [section]                 starts a section
//   key = value               section entry
//   f1 f2 f3                  table row: whitespace separated fields
//   # comment                 full-line or trailing
//
// Delimited text (agents, trades, tables): the same version line, then a
// comma-separated header, then rows. Lines starting with '#' are comments.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace p2pm {

inline constexpr int kFormatVersion = 1;

/// "# p2pm-<kind> v1"
std::string format_header(std::string_view kind);

struct TextEntry {
    int line = 0;
    std::string key;
    std::string value;
};

struct TextRow {
    int line = 0;
    std::vector<std::string> fields;
};

struct TextSection {
    std::string name;
    int line = 0;
    std::vector<TextEntry> entries;
    std::vector<TextRow> rows;

    const TextEntry* find(std::string_view key) const;
};

struct TextDocument {
    std::string source;
    std::string kind;
    std::vector<TextSection> sections;  // sections[0] is the root

    const TextSection& root() const { return sections.front(); }
    const TextSection* section(std::string_view name) const;
};

TextDocument parse_text_document(std::istream& in, const std::string& source, std::string_view expected_kind);
TextDocument read_text_document(const std::filesystem::path& path, std::string_view expected_kind);

struct CsvTable {
    std::string source;
    std::vector<std::string> header;
    std::vector<TextRow> rows;

    /// Column index of `name`; throws ParseError naming the header line when absent.
    std::size_t column(std::string_view name) const;
};

CsvTable parse_csv(std::istream& in, const std::string& source, std::string_view expected_kind);
CsvTable read_csv(const std::filesystem::path& path, std::string_view expected_kind);

double parse_double(std::string_view text, const std::string& source, int line, std::string_view field);
long parse_int(std::string_view text, const std::string& source, int line, std::string_view field);
bool parse_bool(std::string_view text, const std::string& source, int line, std::string_view field);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);
/// Fixed-point text with `digits` decimals; used for report tables.
std::string format_fixed(double value, int digits);

}  // namespace p2pm
