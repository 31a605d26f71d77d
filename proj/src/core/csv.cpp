#include "dpa/csv.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <istream>
#include <ostream>

#include "dpa/errors.hpp"

namespace dpa::csv {

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

namespace {

std::string_view trim_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

} // namespace

Reader::Reader(std::istream& in, std::string source_name)
    : in_(in), source_(std::move(source_name)) {
    if (!std::getline(in_, line_)) {
        throw InvalidInputError(source_ + ": empty file (missing header)");
    }
    ++line_no_;
    std::string_view hdr = trim_cr(line_);
    // Tolerate a UTF-8 byte-order mark.
    if (hdr.size() >= 3 && hdr.substr(0, 3) == "\xEF\xBB\xBF") hdr.remove_prefix(3);
    for (auto f : split(hdr)) header_.emplace_back(f);
}

bool Reader::has_column(std::string_view name) const {
    for (const auto& h : header_)
        if (h == name) return true;
    return false;
}

std::size_t Reader::column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
        if (header_[i] == name) return i;
    throw InvalidInputError(source_ + ": missing column '" + std::string(name) + "'");
}

bool Reader::next(std::vector<std::string_view>& fields) {
    while (std::getline(in_, line_)) {
        ++line_no_;
        std::string_view row = trim_cr(line_);
        if (row.empty()) continue;
        if (row.find('"') != std::string_view::npos) {
            throw InvalidInputError(source_ + ":" + std::to_string(line_no_) +
                                    ": quoted fields are not supported");
        }
        fields = split(row);
        if (fields.size() != header_.size()) {
            throw InvalidInputError(source_ + ":" + std::to_string(line_no_) + ": expected " +
                                    std::to_string(header_.size()) + " fields, got " +
                                    std::to_string(fields.size()));
        }
        return true;
    }
    return false;
}

double Reader::to_double(std::string_view field, std::string_view column_name) const {
    double v = 0.0;
    const auto* b = field.data();
    const auto* e = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e) {
        if (field == "NA" || field.empty()) return std::numeric_limits<double>::quiet_NaN();
        throw InvalidInputError(source_ + ":" + std::to_string(line_no_) + ": column '" +
                                std::string(column_name) + "' is not a number: '" +
                                std::string(field) + "'");
    }
    return v;
}

long long Reader::to_int(std::string_view field, std::string_view column_name) const {
    long long v = 0;
    const auto* b = field.data();
    const auto* e = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e) {
        throw InvalidInputError(source_ + ":" + std::to_string(line_no_) + ": column '" +
                                std::string(column_name) + "' is not an integer: '" +
                                std::string(field) + "'");
    }
    return v;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

void Writer::header(const std::vector<std::string>& names) {
    for (const auto& n : names) field(std::string_view(n));
    end_row();
}

Writer& Writer::field(std::string_view s) {
    if (!first_) out_ << ',';
    out_ << s;
    first_ = false;
    return *this;
}

Writer& Writer::field(double v) { return field(std::string_view(format_double(v))); }

Writer& Writer::field(long long v) { return field(std::string_view(std::to_string(v))); }

void Writer::end_row() {
    out_ << '\n';
    first_ = true;
}

} // namespace dpa::csv
