#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace randctl::csv {

/// Shortest round-trip representation ("%.17g"); identical inputs give identical text.
std::string format_number(double value);

/// Writes RFC 4180 records with CRLF line endings.
class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void header(const std::vector<std::string>& columns);
    void row(const std::vector<std::string>& fields);

private:
    std::ostream& out_;
};

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a named column, or -1.
    int column(std::string_view name) const;
};

/// Parses RFC 4180 text (quoted fields, doubled quotes, CRLF or LF).
/// Throws std::runtime_error on unterminated quotes or ragged rows.
Table parse(std::string_view text);

Table read_file(const std::string& path);

double to_number(const std::string& field);

} // namespace randctl::csv
