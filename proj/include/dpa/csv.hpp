#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace dpa::csv {

// Minimal comma-separated reader for the numeric tables this project
// exchanges. No quoting: a field may not contain ',' or '"'.
class Reader {
public:
    Reader(std::istream& in, std::string source_name);

    const std::vector<std::string>& header() const { return header_; }
    // Column index by name; throws InvalidInputError if absent.
    std::size_t column(std::string_view name) const;
    bool has_column(std::string_view name) const;

    // Reads the next row into `fields`. Returns false at end of input.
    bool next(std::vector<std::string_view>& fields);
    std::size_t line_number() const { return line_no_; }
    const std::string& source() const { return source_; }

    double to_double(std::string_view field, std::string_view column_name) const;
    long long to_int(std::string_view field, std::string_view column_name) const;

private:
    std::istream& in_;
    std::string source_;
    std::vector<std::string> header_;
    std::string line_;
    std::size_t line_no_ = 0;
};

std::vector<std::string_view> split(std::string_view line);

// Shortest round-trip representation.
std::string format_double(double v);

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}
    void header(const std::vector<std::string>& names);

    Writer& field(std::string_view s);
    Writer& field(double v);
    Writer& field(long long v);
    Writer& field(int v) { return field(static_cast<long long>(v)); }
    Writer& field(std::size_t v) { return field(static_cast<long long>(v)); }
    void end_row();

private:
    std::ostream& out_;
    bool first_ = true;
};

} // namespace dpa::csv
