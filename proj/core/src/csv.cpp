#include "randctl/csv.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace randctl::csv {

namespace {

std::string quote_if_needed(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) {
        return field;
    }
    std::string quoted = "\"";
    for (char c : field) {
        if (c == '"') {
            quoted += '"';
        }
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

void write_record(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) {
            out << ',';
        }
        out << quote_if_needed(fields[i]);
    }
    out << "\r\n";
}

} // namespace

std::string format_number(double value) {
    char buffer[40];
    std::snprintf(buffer, sizeof buffer, "%.17g", value);
    return buffer;
}

void Writer::header(const std::vector<std::string>& columns) { write_record(out_, columns); }

void Writer::row(const std::vector<std::string>& fields) { write_record(out_, fields); }

int Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

Table parse(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        if (!(record.size() == 1 && record[0].empty())) {
            records.push_back(std::move(record));
        }
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') {
                ++i;
            }
            end_record();
        } else if (c == '\n') {
            end_record();
        } else {
            field += c;
            field_started = true;
        }
    }
    if (in_quotes) {
        throw std::runtime_error("csv: unterminated quoted field");
    }
    if (field_started || !record.empty()) {
        end_record();
    }

    Table table;
    if (records.empty()) {
        return table;
    }
    table.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != table.header.size()) {
            throw std::runtime_error("csv: row " + std::to_string(r) + " has " +
                                     std::to_string(records[r].size()) + " fields, expected " +
                                     std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(records[r]));
    }
    return table;
}

Table read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str());
}

double to_number(const std::string& field) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(field, &used);
    } catch (const std::exception&) {
        throw std::runtime_error("csv: not a number: '" + field + "'");
    }
    if (used != field.size()) {
        throw std::runtime_error("csv: trailing characters in number: '" + field + "'");
    }
    return value;
}

} // namespace randctl::csv
