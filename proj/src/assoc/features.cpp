#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <utility>

#include "dpa/assoc.hpp"
#include "dpa/csv.hpp"
#include "dpa/errors.hpp"

namespace dpa::assoc {

namespace {

using Key = std::pair<std::string, int>;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string key_str(const Key& k) { return k.first + " period " + std::to_string(k.second); }

template <class Row, class F>
std::map<Key, double> index_rows(const std::vector<Row>& rows, const char* what, F value) {
    std::map<Key, double> out;
    for (const auto& r : rows) {
        const Key k{r.participant_id, r.period};
        if (!out.emplace(k, value(r)).second)
            throw InvalidInputError(std::string("assemble_features: duplicate ") + what + " row for " +
                                    key_str(k));
    }
    return out;
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::ArrayXd da = a.array() - a.mean();
    const Eigen::ArrayXd db = b.array() - b.mean();
    const double den = std::sqrt((da * da).sum() * (db * db).sum());
    return den > 0.0 ? (da * db).sum() / den : 0.0;
}

const std::set<std::string>& standard_columns() {
    static const std::set<std::string> s{"pf", "baseline_pf", "delta_net_auc", "energy", "period"};
    return s;
}

bool is_pc_column(const std::string& name) {
    return name.size() > 2 && name.compare(0, 2, "pc") == 0 &&
           std::all_of(name.begin() + 2, name.end(), [](char c) { return c >= '0' && c <= '9'; });
}

void flag_collinearity(FeatureTable& t) {
    std::vector<std::string> cand;
    if (t.has("pc1")) cand.push_back("pc1");
    if (t.has("delta_net_auc")) cand.push_back("delta_net_auc");
    if (t.has("energy")) cand.push_back("energy");
    const std::set<int> periods(t.periods.begin(), t.periods.end());
    for (int period : periods) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < t.rows(); ++i)
            if (t.periods[i] == period) rows.push_back(i);
        if (rows.size() < 3) continue;
        const FeatureTable sub = t.subset(rows);
        for (std::size_t a = 0; a < cand.size(); ++a) {
            for (std::size_t b = a + 1; b < cand.size(); ++b) {
                const double r = pearson(sub.column(cand[a]), sub.column(cand[b]));
                if (std::abs(r) > kCollinearityThreshold) t.collinear.push_back({period, cand[a], cand[b], r});
            }
        }
    }
}

} // namespace

bool FeatureTable::has(const std::string& name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
}

Eigen::VectorXd FeatureTable::column(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InvalidInputError("feature table has no column '" + name + "'");
    return values.col(it - names.begin());
}

FeatureTable FeatureTable::subset(const std::vector<std::size_t>& rows) const {
    FeatureTable out = *this;
    out.participant_ids.clear();
    out.periods.clear();
    out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= this->rows()) throw InvalidInputError("FeatureTable::subset: row out of range");
        out.participant_ids.push_back(participant_ids[rows[i]]);
        out.periods.push_back(periods[rows[i]]);
        out.values.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(rows[i]));
    }
    out.collinear.clear();
    return out;
}

bool FeatureTable::flagged(const std::string& a, const std::string& b) const {
    return std::any_of(collinear.begin(), collinear.end(), [&](const CollinearityFlag& f) {
        return (f.a == a && f.b == b) || (f.a == b && f.b == a);
    });
}

FeatureTable assemble_features(const std::vector<fpca::ScoreRow>& scores,
                               const std::vector<EnergyRow>& energies, const std::vector<AucRow>& aucs,
                               const std::vector<Covariate>& covariates,
                               const std::vector<OutcomeRow>& outcomes) {
    if (outcomes.empty()) throw InvalidInputError("assemble_features: no outcome rows");

    // Scores pivot to one column per pc.
    std::map<Key, std::map<int, double>> score_map;
    int n_pcs = 0;
    for (const auto& s : scores) {
        auto& row = score_map[{s.participant_id, s.period}];
        if (!row.emplace(s.pc, s.score).second)
            throw InvalidInputError("assemble_features: duplicate score for " +
                                    key_str({s.participant_id, s.period}) + " pc " + std::to_string(s.pc));
        n_pcs = std::max(n_pcs, s.pc);
    }
    // Stacking needs the same components in every period: keep the count
    // retained by all of them.
    std::map<int, int> pcs_per_period;
    for (const auto& s : scores) pcs_per_period[s.period] = std::max(pcs_per_period[s.period], s.pc);
    for (const auto& [period, k] : pcs_per_period) n_pcs = std::min(n_pcs, k);
    const auto energy_map = index_rows(energies, "energy", [](const EnergyRow& r) { return r.energy; });
    const auto auc_map = index_rows(aucs, "delta_net_auc", [](const AucRow& r) { return r.delta_net_auc; });
    std::map<Key, std::pair<double, double>> outcome_map;
    for (const auto& o : outcomes) {
        const Key k{o.participant_id, o.period};
        if (!outcome_map.emplace(k, std::make_pair(o.pf, o.baseline_pf)).second)
            throw InvalidInputError("assemble_features: duplicate outcome row for " + key_str(k));
    }

    FeatureTable t;
    t.n_pcs = n_pcs;
    t.names = {"pf", "baseline_pf"};
    for (int k = 1; k <= n_pcs; ++k) t.names.push_back("pc" + std::to_string(k));
    if (!aucs.empty()) t.names.push_back("delta_net_auc");
    if (!energies.empty()) t.names.push_back("energy");
    t.names.push_back("period");

    // Covariate columns, categorical ones expanded against their reference.
    struct CovColumn {
        const Covariate* cov;
        std::string level;  // empty for numeric
    };
    std::vector<CovColumn> cov_cols;
    for (const auto& c : covariates) {
        if (standard_columns().count(c.name) || is_pc_column(c.name))
            throw InvalidInputError("assemble_features: covariate name '" + c.name + "' is reserved");
        if (!c.categorical) {
            cov_cols.push_back({&c, ""});
            t.names.push_back(c.name);
            continue;
        }
        if (c.reference.empty())
            throw InvalidInputError("assemble_features: categorical covariate '" + c.name +
                                    "' has no reference level");
        std::set<std::string> levels;
        for (const auto& [pid, lvl] : c.levels)
            if (!lvl.empty()) levels.insert(lvl);
        if (!levels.count(c.reference))
            throw InvalidInputError("assemble_features: reference level '" + c.reference + "' of '" +
                                    c.name + "' never occurs");
        for (const auto& lvl : levels) {
            if (lvl == c.reference) continue;
            cov_cols.push_back({&c, lvl});
            t.names.push_back(c.name + "[" + lvl + "]");
        }
    }
    for (std::size_t j = t.names.size() - cov_cols.size(); j < t.names.size(); ++j)
        t.covariate_columns.push_back(t.names[j]);

    std::vector<std::vector<double>> rows;
    std::vector<Key> keys;
    for (const auto& [key, outcome] : outcome_map) {
        const bool in_scores = scores.empty() || score_map.count(key);
        const bool in_energy = energies.empty() || energy_map.count(key);
        const bool in_auc = aucs.empty() || auc_map.count(key);
        if (!in_scores || !in_energy || !in_auc) continue;
        ++t.joined_rows;

        std::vector<double> r{outcome.first, outcome.second};
        for (int k = 1; k <= n_pcs; ++k) {
            double v = kNaN;
            if (!scores.empty()) {
                const auto& sm = score_map.at(key);
                if (auto it = sm.find(k); it != sm.end()) v = it->second;
            }
            r.push_back(v);
        }
        if (!aucs.empty()) r.push_back(auc_map.at(key));
        if (!energies.empty()) r.push_back(energy_map.at(key));
        r.push_back(static_cast<double>(key.second));
        for (const auto& cc : cov_cols) {
            if (cc.level.empty()) {
                const auto it = cc.cov->numeric.find(key.first);
                r.push_back(it == cc.cov->numeric.end() ? kNaN : it->second);
            } else {
                const auto it = cc.cov->levels.find(key.first);
                if (it == cc.cov->levels.end() || it->second.empty())
                    r.push_back(kNaN);
                else
                    r.push_back(it->second == cc.level ? 1.0 : 0.0);
            }
        }
        if (!std::all_of(r.begin(), r.end(), [](double v) { return std::isfinite(v); })) {
            ++t.incomplete_rows;
            continue;
        }
        rows.push_back(std::move(r));
        keys.push_back(key);
    }
    if (rows.empty())
        throw InvalidInputError("assemble_features: zero complete cases after joining (" +
                                std::to_string(t.joined_rows) + " joined rows)");

    t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        t.participant_ids.push_back(keys[i].first);
        t.periods.push_back(keys[i].second);
    }
    flag_collinearity(t);
    return t;
}

void write_features_csv(std::ostream& out, const FeatureTable& table) {
    csv::Writer w(out);
    std::vector<std::string> header{"participant_id"};
    header.insert(header.end(), table.names.begin(), table.names.end());
    if (!table.has("period")) header.push_back("period");
    w.header(header);
    for (std::size_t i = 0; i < table.rows(); ++i) {
        w.field(table.participant_ids[i]);
        for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
            if (table.names[static_cast<std::size_t>(j)] == "period") w.field(table.periods[i]);
            else w.field(table.values(static_cast<Eigen::Index>(i), j));
        }
        if (!table.has("period")) w.field(table.periods[i]);
        w.end_row();
    }
}

FeatureTable read_features_csv(std::istream& in, const std::string& source) {
    csv::Reader r(in, source);
    const auto& header = r.header();
    const auto c_id = r.column("participant_id");
    const auto c_period = r.column("period");
    r.column("pf");

    FeatureTable t;
    std::vector<std::size_t> src;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (j == c_id) continue;
        t.names.push_back(header[j]);
        src.push_back(j);
        if (is_pc_column(header[j])) t.n_pcs = std::max(t.n_pcs, std::stoi(header[j].substr(2)));
        else if (!standard_columns().count(header[j])) t.covariate_columns.push_back(header[j]);
    }

    std::set<Key> seen;
    std::vector<std::vector<double>> rows;
    std::vector<std::string_view> f;
    while (r.next(f)) {
        const Key key{std::string(f[c_id]), static_cast<int>(r.to_int(f[c_period], "period"))};
        if (!seen.insert(key).second)
            throw InvalidInputError(source + ": duplicate row for " + key_str(key));
        ++t.joined_rows;
        std::vector<double> row;
        for (std::size_t j : src) row.push_back(r.to_double(f[j], header[j]));
        if (!std::all_of(row.begin(), row.end(), [](double v) { return std::isfinite(v); })) {
            ++t.incomplete_rows;
            continue;
        }
        rows.push_back(std::move(row));
        t.participant_ids.push_back(key.first);
        t.periods.push_back(key.second);
    }
    if (rows.empty()) throw InvalidInputError(source + ": zero complete cases");
    t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    flag_collinearity(t);
    return t;
}

} // namespace dpa::assoc
