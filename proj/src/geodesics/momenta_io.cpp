#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>

#include "dpa/csv.hpp"
#include "dpa/errors.hpp"
#include "dpa/geodesics.hpp"

namespace dpa::geo {

void write_momenta_csv_header(std::ostream& out) {
    csv::Writer(out).header({"participant_id", "period", "point_index", "x", "y", "mx", "my"});
}

void write_momenta_csv(std::ostream& out, const MomentaField& field) {
    csv::Writer w(out);
    for (Eigen::Index i = 0; i < field.momenta.rows(); ++i) {
        w.field(std::string_view(field.participant_id))
            .field(field.period)
            .field(static_cast<long long>(i))
            .field(field.control_points(i, 0))
            .field(field.control_points(i, 1))
            .field(field.momenta(i, 0))
            .field(field.momenta(i, 1));
        w.end_row();
    }
}

std::vector<MomentaField> read_momenta_csv(std::istream& in, const std::string& source) {
    csv::Reader r(in, source);
    const auto c_pid = r.column("participant_id");
    const auto c_per = r.column("period");
    const auto c_idx = r.column("point_index");
    const auto c_x = r.column("x");
    const auto c_y = r.column("y");
    const auto c_mx = r.column("mx");
    const auto c_my = r.column("my");

    struct Acc {
        std::vector<std::array<double, 4>> rows;
    };
    std::map<std::pair<std::string, int>, Acc> acc;
    std::vector<std::pair<std::string, int>> order;
    std::vector<std::string_view> f;
    while (r.next(f)) {
        std::pair<std::string, int> key{std::string(f[c_pid]), static_cast<int>(r.to_int(f[c_per], "period"))};
        if (key.second != 0 && key.second != 1)
            throw InvalidInputError(source + ": period must be 0 or 1");
        auto it = acc.find(key);
        if (it == acc.end()) {
            it = acc.emplace(key, Acc{}).first;
            order.push_back(key);
        }
        const auto idx = r.to_int(f[c_idx], "point_index");
        if (idx != static_cast<long long>(it->second.rows.size()))
            throw InvalidInputError(source + ":" + std::to_string(r.line_number()) +
                                    ": point_index out of sequence");
        it->second.rows.push_back({r.to_double(f[c_x], "x"), r.to_double(f[c_y], "y"),
                                   r.to_double(f[c_mx], "mx"), r.to_double(f[c_my], "my")});
    }

    std::vector<MomentaField> out;
    for (const auto& key : order) {
        const auto& rows = acc.at(key).rows;
        MomentaField m;
        m.participant_id = key.first;
        m.period = key.second;
        const auto n = static_cast<Eigen::Index>(rows.size());
        m.control_points.resize(n, 2);
        m.momenta.resize(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            m.control_points(i, 0) = rows[i][0];
            m.control_points(i, 1) = rows[i][1];
            m.momenta(i, 0) = rows[i][2];
            m.momenta(i, 1) = rows[i][3];
        }
        m.energy = deformation_energy(m.momenta);
        out.push_back(std::move(m));
    }
    return out;
}

namespace {

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::array<unsigned char, sizeof(T)> b;
        std::memcpy(b.data(), &v, sizeof(T));
        std::reverse(b.begin(), b.end());
        std::memcpy(&v, b.data(), sizeof(T));
    }
    return v;
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof v);
    bits = to_little(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
}

double get_f64(std::istream& in) {
    std::uint64_t bits = 0;
    if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits))
        throw InvalidInputError("momenta binary: truncated payload");
    bits = to_little(bits);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

} // namespace

void write_momenta_binary(std::ostream& out, const MomentaField& field) {
    std::array<char, 16> header{};
    std::memcpy(header.data(), "DPA1", 4);
    const auto count = to_little(static_cast<std::uint32_t>(field.momenta.rows()));
    std::memcpy(header.data() + 4, &count, 4);
    header[8] = static_cast<char>(static_cast<std::uint8_t>(field.period));
    out.write(header.data(), header.size());
    for (Eigen::Index i = 0; i < field.momenta.rows(); ++i) {
        put_f64(out, field.control_points(i, 0));
        put_f64(out, field.control_points(i, 1));
        put_f64(out, field.momenta(i, 0));
        put_f64(out, field.momenta(i, 1));
    }
}

MomentaField read_momenta_binary(std::istream& in) {
    std::array<char, 16> header{};
    if (!in.read(header.data(), header.size()))
        throw InvalidInputError("momenta binary: truncated header");
    if (std::memcmp(header.data(), "DPA1", 4) != 0)
        throw InvalidInputError("momenta binary: bad magic");
    std::uint32_t count = 0;
    std::memcpy(&count, header.data() + 4, 4);
    count = to_little(count);

    MomentaField m;
    m.period = static_cast<std::uint8_t>(header[8]);
    m.control_points.resize(count, 2);
    m.momenta.resize(count, 2);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(count); ++i) {
        m.control_points(i, 0) = get_f64(in);
        m.control_points(i, 1) = get_f64(in);
        m.momenta(i, 0) = get_f64(in);
        m.momenta(i, 1) = get_f64(in);
    }
    m.energy = deformation_energy(m.momenta);
    return m;
}

} // namespace dpa::geo
