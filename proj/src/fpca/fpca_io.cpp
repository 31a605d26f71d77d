#include <istream>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

#include "dpa/csv.hpp"
#include "dpa/errors.hpp"
#include "dpa/fpca.hpp"

namespace dpa::fpca {

using nlohmann::json;

namespace {

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// Row-major nested arrays.
json mat(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
    return rows;
}

Eigen::VectorXd to_vec(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd to_mat(const json& j, Eigen::Index cols) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        const Eigen::VectorXd r = to_vec(j[i]);
        if (r.size() != cols) throw InvalidInputError("fpca json: ragged matrix");
        m.row(static_cast<Eigen::Index>(i)) = r.transpose();
    }
    return m;
}

Domain parse_domain(const std::string& s) {
    if (s == "X") return Domain::X;
    if (s == "Y") return Domain::Y;
    if (s == "Concatenated") return Domain::Concatenated;
    throw InvalidInputError("fpca json: unknown domain '" + s + "'");
}

json univariate_json(const FpcaModel& m) {
    return {{"domain", std::string(to_string(m.domain))},
            {"pve_target", m.pve_target},
            {"components", m.components()},
            {"grid", vec(m.grid)},
            {"quad_weights", vec(m.quad_weights)},
            {"mean", vec(m.mean)},
            {"eigenvalues", vec(m.eigenvalues)},
            {"spectrum", vec(m.spectrum)},
            {"pve", vec(m.pve)},
            {"eigenfunctions", mat(m.eigenfunctions)},
            {"scores", mat(m.scores)}};
}

FpcaModel univariate_from_json(const json& j, const std::vector<std::string>& ids) {
    FpcaModel m;
    m.domain = parse_domain(j.at("domain").get<std::string>());
    m.pve_target = j.at("pve_target").get<double>();
    m.grid = to_vec(j.at("grid"));
    m.quad_weights = to_vec(j.at("quad_weights"));
    m.mean = to_vec(j.at("mean"));
    m.eigenvalues = to_vec(j.at("eigenvalues"));
    m.spectrum = to_vec(j.at("spectrum"));
    m.pve = to_vec(j.at("pve"));
    m.eigenfunctions = to_mat(j.at("eigenfunctions"), m.grid.size());
    m.scores = to_mat(j.at("scores"), m.eigenvalues.size());
    m.participant_ids = ids;
    if (m.eigenfunctions.rows() != m.eigenvalues.size() || m.mean.size() != m.grid.size())
        throw InvalidInputError("fpca json: inconsistent univariate model");
    return m;
}

} // namespace

void write_period_json(std::ostream& out, const PeriodFpca& fit) {
    const MfpcaModel& mf = fit.mfpca;
    json j;
    j["period"] = fit.period;
    j["participants"] = mf.participant_ids;
    j["univariate"] = {{"x", univariate_json(fit.x)}, {"y", univariate_json(fit.y)}};
    j["multivariate"] = {{"pve_target", mf.pve_target},
                         {"L", mf.retained()},
                         {"kx", mf.kx},
                         {"ky", mf.ky},
                         {"eigenvalues", vec(mf.eigenvalues)},
                         {"spectrum", vec(mf.spectrum)},
                         {"pve", vec(mf.pve)},
                         {"weights", mat(mf.weights)},
                         {"eigenfunctions_x", mat(mf.eigenfunctions_x)},
                         {"eigenfunctions_y", mat(mf.eigenfunctions_y)},
                         {"scores", mat(mf.scores)}};
    const auto& mean = fit.mean_field;
    j["mean_field"] = {{"control_points", mat(mean.control_points)},
                       {"momenta", mat(mean.momenta)}};
    out << j.dump(1) << '\n';
}

PeriodFpca read_period_json(std::istream& in) {
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InvalidInputError(std::string("fpca json: ") + e.what());
    }
    try {
        PeriodFpca fit;
        fit.period = j.at("period").get<int>();
        const auto ids = j.at("participants").get<std::vector<std::string>>();
        fit.x = univariate_from_json(j.at("univariate").at("x"), ids);
        fit.y = univariate_from_json(j.at("univariate").at("y"), ids);

        const json& m = j.at("multivariate");
        MfpcaModel& mf = fit.mfpca;
        mf.participant_ids = ids;
        mf.pve_target = m.at("pve_target").get<double>();
        mf.kx = m.at("kx").get<Eigen::Index>();
        mf.ky = m.at("ky").get<Eigen::Index>();
        mf.eigenvalues = to_vec(m.at("eigenvalues"));
        mf.spectrum = to_vec(m.at("spectrum"));
        mf.pve = to_vec(m.at("pve"));
        const Eigen::Index l = mf.eigenvalues.size();
        mf.weights = to_mat(m.at("weights"), l);
        mf.eigenfunctions_x = to_mat(m.at("eigenfunctions_x"), fit.x.grid.size());
        mf.eigenfunctions_y = to_mat(m.at("eigenfunctions_y"), fit.y.grid.size());
        mf.scores = to_mat(m.at("scores"), l);
        if (mf.weights.rows() != mf.kx + mf.ky || mf.kx != fit.x.components() ||
            mf.ky != fit.y.components())
            throw InvalidInputError("fpca json: multivariate weights do not match the univariate fits");

        const json& mean = j.at("mean_field");
        fit.mean_field.participant_id = "mean";
        fit.mean_field.period = fit.period;
        fit.mean_field.control_points = to_mat(mean.at("control_points"), 2);
        fit.mean_field.momenta = to_mat(mean.at("momenta"), 2);
        fit.mean_field.energy = geo::deformation_energy(fit.mean_field.momenta);
        return fit;
    } catch (const json::exception& e) {
        throw InvalidInputError(std::string("fpca json: ") + e.what());
    }
}

void write_scores_csv_header(std::ostream& out) {
    csv::Writer(out).header({"participant_id", "period", "pc", "score"});
}

void write_scores_csv(std::ostream& out, const PeriodFpca& fit) {
    const MfpcaModel& mf = fit.mfpca;
    if (static_cast<Eigen::Index>(mf.participant_ids.size()) != mf.scores.rows())
        throw InvalidInputError("write_scores_csv: model has no participant ids");
    csv::Writer w(out);
    for (Eigen::Index i = 0; i < mf.scores.rows(); ++i) {
        for (Eigen::Index l = 0; l < mf.scores.cols(); ++l) {
            w.field(mf.participant_ids[static_cast<std::size_t>(i)])
                .field(fit.period)
                .field(static_cast<long long>(l + 1))
                .field(mf.scores(i, l));
            w.end_row();
        }
    }
}

std::vector<ScoreRow> read_scores_csv(std::istream& in, const std::string& source) {
    csv::Reader r(in, source);
    const auto c_id = r.column("participant_id");
    const auto c_period = r.column("period");
    const auto c_pc = r.column("pc");
    const auto c_score = r.column("score");
    std::vector<ScoreRow> rows;
    std::vector<std::string_view> f;
    while (r.next(f)) {
        ScoreRow row;
        row.participant_id = std::string(f[c_id]);
        row.period = static_cast<int>(r.to_int(f[c_period], "period"));
        row.pc = static_cast<int>(r.to_int(f[c_pc], "pc"));
        row.score = r.to_double(f[c_score], "score");
        if (row.pc < 1) throw InvalidInputError(source + ": pc index must be >= 1");
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_pve_table(std::ostream& out, const std::vector<PeriodFpca>& fits) {
    std::vector<std::string> names{"component"};
    Eigen::Index rows = 0;
    for (const auto& f : fits) {
        names.push_back("pve_period" + std::to_string(f.period));
        rows = std::max(rows, f.mfpca.spectrum.size());
    }
    csv::Writer w(out);
    w.header(names);
    for (Eigen::Index l = 0; l < rows; ++l) {
        w.field(static_cast<long long>(l + 1));
        for (const auto& f : fits) {
            const Eigen::VectorXd cum = cumulative_pve(f.mfpca.spectrum, f.mfpca.spectrum.size());
            if (l < cum.size())
                w.field(cum[l]);
            else
                w.field(std::string_view("NA"));
        }
        w.end_row();
    }
}

} // namespace dpa::fpca
