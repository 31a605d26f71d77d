#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <nlohmann/json.hpp>
#include <openssl/opensslv.h>

#include "config_json.hpp"
#include "dpa/csv.hpp"
#include "dpa/errors.hpp"
#include "dpa/fpca.hpp"
#include "dpa/harness.hpp"
#include "dpa/log.hpp"
#include "dpa/parallel.hpp"

namespace dpa::harness {

namespace fs = std::filesystem;
using nlohmann::json;

StageError::StageError(std::string stage, std::vector<std::string> participants, const std::string& what,
                       bool numeric)
    : std::runtime_error(what), stage_(std::move(stage)), participants_(std::move(participants)), numeric_(numeric) {}

const char* stage_name(Stage s) {
    switch (s) {
    case Stage::Prep: return "prep";
    case Stage::Match: return "match";
    case Stage::Mfpca: return "mfpca";
    case Stage::Features: return "features";
    case Stage::Assoc: return "assoc";
    case Stage::Plots: return "plots";
    }
    return "?";
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::ofstream open_out(const fs::path& p) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw InvalidInputError("cannot write " + p.string());
    return out;
}

std::ifstream open_in(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InvalidInputError("cannot open " + p.string());
    return in;
}

void write_json(const fs::path& p, const json& j) {
    auto out = open_out(p);
    out << j.dump(1) << '\n';
}

json read_json(const fs::path& p) {
    auto in = open_in(p);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidInputError(p.string() + ": " + e.what());
    }
}

// Write to a temporary name, then rename, so a crash never leaves a
// half-written cache entry.
void atomic_write(const fs::path& p, const std::string& bytes) {
    const fs::path tmp = p.string() + ".tmp";
    {
        auto out = open_out(tmp);
        out << bytes;
    }
    fs::rename(tmp, p);
}

std::string bytes_of(const Eigen::VectorXd& v) {
    return std::string(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(double));
}

// ---------------------------------------------------------------------------
// Input tables
// ---------------------------------------------------------------------------

double optional_double(const csv::Reader& r, std::string_view f, std::string_view column) {
    if (f.empty() || f == "NA" || f == "nan") return kNaN;
    return r.to_double(f, column);
}

std::vector<assoc::OutcomeRow> read_outcomes(const fs::path& path) {
    auto in = open_in(path);
    csv::Reader r(in, path.string());
    const auto c_id = r.column("participant_id");
    const auto c_period = r.column("period");
    const auto c_pf = r.column("pf");
    const auto c_base = r.column("baseline_pf");
    std::vector<assoc::OutcomeRow> rows;
    std::vector<std::string_view> f;
    while (r.next(f)) {
        assoc::OutcomeRow o;
        o.participant_id = std::string(f[c_id]);
        o.period = static_cast<int>(r.to_int(f[c_period], "period"));
        o.pf = optional_double(r, f[c_pf], "pf");
        o.baseline_pf = optional_double(r, f[c_base], "baseline_pf");
        rows.push_back(std::move(o));
    }
    return rows;
}

// Numeric columns parse as numbers; anything else is categorical and needs
// a declared reference level.
std::vector<assoc::Covariate> read_covariates(const fs::path& path, const std::map<std::string, std::string>& refs) {
    auto in = open_in(path);
    csv::Reader r(in, path.string());
    const auto c_id = r.column("participant_id");
    const auto& header = r.header();
    std::vector<std::vector<std::pair<std::string, std::string>>> raw(header.size());
    std::vector<std::string_view> f;
    std::set<std::string> seen;
    while (r.next(f)) {
        const std::string id(f[c_id]);
        if (!seen.insert(id).second) throw InvalidInputError(path.string() + ": duplicate participant " + id);
        for (std::size_t j = 0; j < header.size(); ++j)
            if (j != c_id) raw[j].emplace_back(id, std::string(f[j]));
    }
    std::vector<assoc::Covariate> out;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (j == c_id) continue;
        assoc::Covariate c;
        c.name = header[j];
        bool numeric = true;
        for (const auto& [id, v] : raw[j]) {
            if (v.empty() || v == "NA") continue;
            try {
                std::size_t pos = 0;
                (void)std::stod(v, &pos);
                if (pos != v.size()) numeric = false;
            } catch (const std::exception&) {
                numeric = false;
            }
        }
        if (numeric) {
            for (const auto& [id, v] : raw[j]) c.numeric[id] = (v.empty() || v == "NA") ? kNaN : std::stod(v);
        } else {
            c.categorical = true;
            const auto it = refs.find(c.name);
            if (it == refs.end())
                throw InvalidInputError("covariate '" + c.name +
                                        "' is categorical; declare its reference level in "
                                        "pipeline.inputs.categorical_reference");
            c.reference = it->second;
            for (const auto& [id, v] : raw[j]) c.levels[id] = v == "NA" ? "" : v;
        }
        out.push_back(std::move(c));
    }
    for (const auto& [name, level] : refs)
        if (std::none_of(out.begin(), out.end(), [&](const assoc::Covariate& c) { return c.name == name; }))
            throw InvalidInputError("categorical_reference names unknown covariate '" + name + "'");
    return out;
}

// ---------------------------------------------------------------------------
// Stage bookkeeping
// ---------------------------------------------------------------------------

json versions() {
    return {{"dpa", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", BOOST_LIB_VERSION},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"openssl", OPENSSL_VERSION_TEXT},
            {"compiler", __VERSION__}};
}

// Settings that may change results; workers and locations do not.
json result_settings(const PipelineConfig& cfg) {
    json j = pipeline_json(cfg);
    j.erase("workers");
    j.erase("out_dir");
    j.erase("cache_dir");
    j["inputs"].erase("minutes");
    j["inputs"].erase("outcomes");
    j["inputs"].erase("covariates");
    return j;
}

class Runner {
public:
    explicit Runner(const PipelineConfig& cfg) : cfg_(cfg), out_(cfg.out_dir) {
        const fs::path m = out_ / "manifest.json";
        if (fs::exists(m)) {
            try {
                previous_ = read_json(m);
            } catch (const std::exception&) {
                previous_ = json::object();
            }
        }
    }

    const fs::path& out() const { return out_; }

    std::string hash(const fs::path& rel) const { return sha256_file(out_ / rel); }

    // Runs `body` unless the previous manifest holds the same key with the
    // listed artifacts unchanged.
    template <class F>
    void stage(Stage s, const json& key_material, const std::vector<std::string>& outputs, F body) {
        StageRecord rec;
        rec.name = stage_name(s);
        json km = key_material;
        km["stage"] = rec.name;
        km["version"] = kVersion;
        rec.key = sha256_hex(km.dump());
        const auto t0 = std::chrono::steady_clock::now();

        if (reusable(rec, outputs)) {
            rec.status = "cached";
        } else {
            try {
                body();
            } catch (const StageError&) {
                write_manifest();
                throw;
            } catch (const NumericError& e) {
                write_manifest();
                throw StageError(rec.name, {}, rec.name + ": " + e.what(), true);
            } catch (const std::exception& e) {
                write_manifest();
                throw StageError(rec.name, {}, rec.name + ": " + e.what(), false);
            }
            rec.status = "ran";
            for (const auto& o : outputs) rec.artifacts.push_back({o, hash(o)});
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        records_.push_back(rec);
        write_manifest();
    }

    const std::vector<StageRecord>& records() const { return records_; }

private:
    bool reusable(StageRecord& rec, const std::vector<std::string>& outputs) const {
        if (!previous_.contains("stages")) return false;
        for (const auto& st : previous_["stages"]) {
            if (st.value("name", "") != rec.name || st.value("key", "") != rec.key) continue;
            std::vector<Artifact> arts;
            for (const auto& a : st.at("artifacts")) arts.push_back({a.at("path"), a.at("sha256")});
            if (arts.size() != outputs.size()) return false;
            for (std::size_t i = 0; i < arts.size(); ++i) {
                if (arts[i].path != outputs[i] || !fs::exists(out_ / arts[i].path)) return false;
                if (hash(arts[i].path) != arts[i].sha256) return false;
            }
            rec.artifacts = arts;
            return true;
        }
        return false;
    }

    void write_manifest() const {
        json stages = json::array();
        for (const auto& r : records_) {
            json arts = json::array();
            for (const auto& a : r.artifacts) arts.push_back({{"path", a.path}, {"sha256", a.sha256}});
            stages.push_back(
                {{"name", r.name}, {"key", r.key}, {"status", r.status}, {"seconds", r.seconds}, {"artifacts", arts}});
        }
        json j{{"version", kVersion},
               {"config_hash", sha256_hex(result_settings(cfg_).dump())},
               {"config", pipeline_json(cfg_)},
               {"versions", versions()},
               {"stages", stages}};
        atomic_write(out_ / "manifest.json", j.dump(1) + "\n");
    }

    const PipelineConfig& cfg_;
    fs::path out_;
    json previous_ = json::object();
    std::vector<StageRecord> records_;
};

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void run_prep(const PipelineConfig& cfg, const fs::path& out) {
    std::vector<prep::VisitBlock> blocks;
    {
        auto in = open_in(cfg.minutes);
        blocks = prep::read_minute_csv(in, cfg.minutes.string());
    }
    if (blocks.empty()) throw InvalidInputError(cfg.minutes.string() + ": no minute records");

    struct Slot {
        std::optional<prep::DiurnalCurve> curve;
        prep::DayFilterResult filter;
        std::string error;
        bool numeric = false;
    };
    std::vector<Slot> slots(blocks.size());
    parallel_for(blocks.size(), cfg.workers, [&](std::size_t i) {
        Slot& s = slots[i];
        try {
            s.filter = prep::filter_valid_days(blocks[i], cfg.day_rules);
            if (!s.filter.valid()) return;
            const auto raw = prep::average_daily_profile(blocks[i].participant_id, blocks[i].visit, s.filter.retained,
                                                         cfg.day_rules.min_valid_days);
            s.curve = prep::smooth_curve(raw, cfg.target_df);
            s.filter.retained.clear();
        } catch (const NumericError& e) {
            s.error = e.what();
            s.numeric = true;
        } catch (const std::exception& e) {
            s.error = e.what();
        }
    });
    std::vector<std::string> failed;
    std::string first_error;
    bool numeric = false;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].error.empty()) continue;
        failed.push_back(blocks[i].participant_id + "/" + std::string(prep::to_string(blocks[i].visit)));
        if (first_error.empty()) first_error = slots[i].error;
        numeric = numeric || slots[i].numeric;
    }
    if (!failed.empty())
        throw StageError("prep", failed, "prep: " + std::to_string(failed.size()) + " visit(s) failed: " + first_error,
                         numeric);

    std::vector<prep::DiurnalCurve> smoothed;
    json exclusions = json::array();
    json dropped = json::array();
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const auto& b = blocks[i];
        if (!slots[i].filter.dropped_days.empty())
            dropped.push_back({{"participant_id", b.participant_id},
                               {"visit", std::string(prep::to_string(b.visit))},
                               {"days", slots[i].filter.dropped_days}});
        if (slots[i].curve)
            smoothed.push_back(std::move(*slots[i].curve));
        else
            exclusions.push_back({{"participant_id", b.participant_id},
                                  {"visit", std::string(prep::to_string(b.visit))},
                                  {"reason", slots[i].filter.excluded_reason.value_or("")}});
    }
    if (smoothed.size() < 2) throw DegenerateDataError("prep: fewer than two valid visits");
    const prep::ScalingParams sp = prep::fit_scaling(smoothed);
    std::vector<prep::DiurnalCurve> scaled;
    scaled.reserve(smoothed.size());
    for (const auto& c : smoothed) scaled.push_back(prep::scale_curve(c, sp));
    {
        auto o = open_out(out / "curves.csv");
        prep::write_curves_csv(o, scaled);
    }
    write_json(out / "prep_summary.json",
               {{"visits_read", blocks.size()},
                {"visits_valid", scaled.size()},
                {"visits_excluded", exclusions.size()},
                {"scaling", {{"grand_mean", sp.grand_mean}, {"grand_sd", sp.grand_sd}}},
                {"target_df", cfg.target_df},
                {"day_rules",
                 {{"max_nonwear_minutes", cfg.day_rules.max_nonwear_minutes},
                  {"min_wear_minutes", cfg.day_rules.min_wear_minutes},
                  {"min_valid_days", cfg.day_rules.min_valid_days}}},
                {"exclusions", exclusions},
                {"dropped_days", dropped}});
}

struct MatchRecord {
    geo::MomentaField field;
    double residual = 0.0;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string stop_reason;
    double delta_net_auc = 0.0;
    bool cached = false;
};

void run_match(const PipelineConfig& cfg, const fs::path& out) {
    std::vector<prep::DiurnalCurve> curves;
    {
        auto in = open_in(out / "curves.csv");
        curves = prep::read_curves_csv(in, prep::CurveStage::Scaled, (out / "curves.csv").string());
    }
    std::map<std::pair<std::string, int>, const prep::DiurnalCurve*> by_key;
    for (const auto& c : curves) by_key[{c.participant_id, static_cast<int>(c.visit)}] = &c;

    struct Pair {
        const prep::DiurnalCurve* source;
        const prep::DiurnalCurve* target;
        int period;
    };
    std::vector<Pair> pairs;
    for (int period = 0; period < 2; ++period)
        for (const auto& [key, c] : by_key)
            if (key.second == period)
                if (auto it = by_key.find({key.first, period + 1}); it != by_key.end())
                    pairs.push_back({c, it->second, period});
    if (pairs.empty()) throw DegenerateDataError("match: no participant has two consecutive valid visits");

    const fs::path cache = cache_directory(cfg) / "match";
    fs::create_directories(cache);
    const json settings = {{"kernel", pipeline_json(cfg)["kernel"]}, {"match", pipeline_json(cfg)["match"]}};

    std::vector<MatchRecord> recs(pairs.size());
    std::vector<std::string> errors(pairs.size());
    std::vector<char> numeric_error(pairs.size(), 0);
    parallel_for(pairs.size(), cfg.workers, [&](std::size_t i) {
        const Pair& pr = pairs[i];
        MatchRecord& r = recs[i];
        try {
            r.delta_net_auc = prep::delta_net_auc(*pr.source, *pr.target);
            const std::string key = sha256_hex(settings.dump() + bytes_of(pr.source->grid) +
                                               bytes_of(pr.source->values) + bytes_of(pr.target->values));
            const fs::path bin = cache / (key + ".dpa");
            const fs::path meta = cache / (key + ".json");
            if (fs::exists(bin) && fs::exists(meta)) {
                try {
                    auto in = open_in(bin);
                    r.field = geo::read_momenta_binary(in);
                    const json m = read_json(meta);
                    r.residual = m.at("attachment_residual");
                    r.objective = m.at("objective");
                    r.iterations = m.at("iterations");
                    r.converged = m.at("converged");
                    r.stop_reason = m.at("stop_reason");
                    r.field.kernel_energy = m.at("kernel_energy");
                    r.field.participant_id = pr.source->participant_id;
                    r.field.period = pr.period;
                    r.cached = true;
                    return;
                } catch (const std::exception& e) {
                    log::warn("match cache entry " + key + " unreadable, recomputing: " + e.what());
                }
            }
            const geo::DeformationResult res = geo::match_curves(*pr.source, *pr.target, cfg.kernel, cfg.match);
            r.field = res.momenta_field;
            r.field.period = pr.period;
            r.residual = res.attachment_residual;
            r.objective = res.objective_trace.empty() ? 0.0 : res.objective_trace.back();
            r.iterations = res.iterations;
            r.converged = res.converged;
            r.stop_reason = res.stop_reason;
            std::ostringstream b;
            geo::write_momenta_binary(b, r.field);
            atomic_write(bin, b.str());
            atomic_write(meta, json{{"attachment_residual", r.residual},
                                    {"objective", r.objective},
                                    {"iterations", r.iterations},
                                    {"converged", r.converged},
                                    {"stop_reason", r.stop_reason},
                                    {"kernel_energy", r.field.kernel_energy}}
                                   .dump());
        } catch (const NumericError& e) {
            errors[i] = e.what();
            numeric_error[i] = 1;
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    std::vector<std::string> failed;
    std::string first_error;
    bool numeric = false;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (errors[i].empty()) continue;
        failed.push_back(pairs[i].source->participant_id + "/period" + std::to_string(pairs[i].period));
        if (first_error.empty()) first_error = errors[i];
        numeric = numeric || numeric_error[i];
    }
    if (!failed.empty())
        throw StageError("match", failed,
                         "match: " + std::to_string(failed.size()) + " matching(s) failed: " + first_error, numeric);

    {
        auto o = open_out(out / "momenta.csv");
        geo::write_momenta_csv_header(o);
        for (const auto& r : recs) geo::write_momenta_csv(o, r.field);
    }
    {
        auto o = open_out(out / "energies.csv");
        csv::Writer w(o);
        w.header({"participant_id", "period", "energy", "kernel_energy", "delta_net_auc", "attachment_residual",
                  "iterations", "converged"});
        for (const auto& r : recs) {
            w.field(r.field.participant_id)
                .field(r.field.period)
                .field(r.field.energy)
                .field(r.field.kernel_energy)
                .field(r.delta_net_auc)
                .field(r.residual)
                .field(r.iterations)
                .field(static_cast<int>(r.converged));
            w.end_row();
        }
    }
    json runs = json::array();
    int converged = 0, hits = 0;
    for (const auto& r : recs) {
        converged += r.converged;
        hits += r.cached;
        runs.push_back({{"participant_id", r.field.participant_id},
                        {"period", r.field.period},
                        {"energy", r.field.energy},
                        {"kernel_energy", r.field.kernel_energy},
                        {"attachment_residual", r.residual},
                        {"objective", r.objective},
                        {"iterations", r.iterations},
                        {"converged", r.converged},
                        {"stop_reason", r.stop_reason}});
    }
    write_json(out / "match_summary.json", {{"kernel", settings["kernel"]},
                                            {"match", settings["match"]},
                                            {"matchings", recs.size()},
                                            {"converged", converged},
                                            {"cache_hits", hits},
                                            {"runs", runs}});
}

std::map<int, std::vector<geo::MomentaField>> momenta_by_period(const fs::path& out) {
    auto in = open_in(out / "momenta.csv");
    std::map<int, std::vector<geo::MomentaField>> by;
    for (auto& f : geo::read_momenta_csv(in, (out / "momenta.csv").string())) by[f.period].push_back(std::move(f));
    for (auto& [period, v] : by)
        std::sort(v.begin(), v.end(),
                  [](const geo::MomentaField& a, const geo::MomentaField& b) { return a.participant_id < b.participant_id; });
    return by;
}

std::vector<std::string> mfpca_outputs(const std::vector<int>& periods) {
    std::vector<std::string> o;
    for (int p : periods) o.push_back("fpca_period" + std::to_string(p) + ".json");
    o.insert(o.end(), {"scores.csv", "pve_table.csv", "concat_summary.json"});
    return o;
}

void run_mfpca(const PipelineConfig& cfg, const fs::path& out, const std::map<int, std::vector<geo::MomentaField>>& by) {
    std::vector<fpca::PeriodFpca> fits;
    json concat = json::array();
    for (const auto& [period, fields] : by) {
        if (fields.size() < 2)
            throw DegenerateDataError("mfpca: period " + std::to_string(period) + " has fewer than two matchings");
        fits.push_back(fpca::fit_period(fields, cfg.univariate_pve, cfg.multivariate_pve));
        const auto& fit = fits.back();
        {
            auto o = open_out(out / ("fpca_period" + std::to_string(period) + ".json"));
            fpca::write_period_json(o, fit);
        }
        const auto [sx, sy] = fpca::momenta_samples(fields);
        const fpca::FpcaModel cc = fpca::concat_ufpca(sx, sy, cfg.univariate_pve);
        json comps = json::array();
        const Eigen::Index m = std::min<Eigen::Index>({3, fit.mfpca.retained(), cc.components()});
        const Eigen::MatrixXd cx = cc.domain_slice(fpca::Domain::X);
        const Eigen::MatrixXd cy = cc.domain_slice(fpca::Domain::Y);
        for (Eigen::Index l = 1; l <= m; ++l) {
            const auto cmp = fpca::compare_concat(fit.mfpca, cc, l);
            // Sign of the concatenated function relative to the multivariate one.
            const double dot = fit.mfpca.eigenfunctions_x.row(l - 1).dot(cx.row(l - 1)) +
                               fit.mfpca.eigenfunctions_y.row(l - 1).dot(cy.row(l - 1));
            const double sign = dot < 0.0 ? -1.0 : 1.0;
            const Eigen::VectorXd ex = sign * cx.row(l - 1).transpose();
            const Eigen::VectorXd ey = sign * cy.row(l - 1).transpose();
            comps.push_back({{"component", l},
                             {"cosine_x", cmp.cosine_x},
                             {"cosine_y", cmp.cosine_y},
                             {"concat_x", std::vector<double>(ex.data(), ex.data() + ex.size())},
                             {"concat_y", std::vector<double>(ey.data(), ey.data() + ey.size())}});
        }
        const auto b = cc.components() > 0 && fit.mfpca.retained() > 0 ? fpca::compare_concat(fit.mfpca, cc, 1)
                                                                         : fpca::ConcatComparison{};
        concat.push_back({{"period", period},
                          {"components", cc.components()},
                          {"eigenvalues", std::vector<double>(cc.eigenvalues.data(),
                                                              cc.eigenvalues.data() + cc.eigenvalues.size())},
                          {"boundary_concat", b.boundary_concat},
                          {"boundary_mfpca", b.boundary_mfpca},
                          {"comparison", comps}});
    }
    {
        auto o = open_out(out / "scores.csv");
        fpca::write_scores_csv_header(o);
        for (const auto& f : fits) fpca::write_scores_csv(o, f);
    }
    {
        auto o = open_out(out / "pve_table.csv");
        fpca::write_pve_table(o, fits);
    }
    write_json(out / "concat_summary.json", concat);
}

void run_features(const PipelineConfig& cfg, const fs::path& out) {
    std::vector<fpca::ScoreRow> scores;
    {
        auto in = open_in(out / "scores.csv");
        scores = fpca::read_scores_csv(in, (out / "scores.csv").string());
    }
    std::vector<assoc::EnergyRow> energies;
    std::vector<assoc::AucRow> aucs;
    {
        auto in = open_in(out / "energies.csv");
        csv::Reader r(in, (out / "energies.csv").string());
        const auto c_id = r.column("participant_id"), c_p = r.column("period"), c_e = r.column("energy"),
                   c_a = r.column("delta_net_auc");
        std::vector<std::string_view> f;
        while (r.next(f)) {
            const std::string id(f[c_id]);
            const int p = static_cast<int>(r.to_int(f[c_p], "period"));
            energies.push_back({id, p, r.to_double(f[c_e], "energy")});
            aucs.push_back({id, p, r.to_double(f[c_a], "delta_net_auc")});
        }
    }
    const auto outcomes = read_outcomes(cfg.outcomes);
    const auto covariates =
        cfg.covariates.empty() ? std::vector<assoc::Covariate>{} : read_covariates(cfg.covariates, cfg.categorical_reference);
    const assoc::FeatureTable t = assoc::assemble_features(scores, energies, aucs, covariates, outcomes);
    {
        auto o = open_out(out / "features.csv");
        assoc::write_features_csv(o, t);
    }
    json flags = json::array();
    for (const auto& c : t.collinear) flags.push_back({{"period", c.period}, {"a", c.a}, {"b", c.b}, {"r", c.r}});
    write_json(out / "features_summary.json", {{"joined_rows", t.joined_rows},
                                               {"incomplete_rows", t.incomplete_rows},
                                               {"complete_rows", t.rows()},
                                               {"n_pcs", t.n_pcs},
                                               {"covariate_columns", t.covariate_columns},
                                               {"collinearity_threshold", assoc::kCollinearityThreshold},
                                               {"collinear_pairs", flags}});
}

assoc::FeatureTable load_features(const fs::path& out) {
    auto in = open_in(out / "features.csv");
    return assoc::read_features_csv(in, (out / "features.csv").string());
}

void run_assoc(const PipelineConfig& cfg, const fs::path& out) {
    const assoc::FeatureTable t = load_features(out);
    assoc::ModelsReport rep = assoc::run_models(t, cfg.models);
    if (cfg.lasso) {
        const assoc::Formula f = assoc::model1_formula(t, cfg.models);
        const auto grid = assoc::default_lambda_grid(t, f, cfg.lasso_grid);
        rep.selection = assoc::lasso_lmm(t, f, grid);
    }
    {
        auto o = open_out(out / "report.json");
        assoc::write_report_json(o, rep);
    }
    {
        auto o = open_out(out / "report.txt");
        assoc::write_report_text(o, rep);
    }
}

std::vector<std::string> plot_outputs() {
    return {"plots/mean_momenta.csv", "plots/pc_deformations.csv", "plots/eigenfunction_overlay.csv",
            "plots/interaction.csv"};
}

void run_plots(const PipelineConfig& cfg, const fs::path& out, const std::vector<int>& periods) {
    std::vector<fpca::PeriodFpca> fits;
    for (int p : periods) {
        auto in = open_in(out / ("fpca_period" + std::to_string(p) + ".json"));
        fits.push_back(fpca::read_period_json(in));
    }
    {
        auto o = open_out(out / "plots/mean_momenta.csv");
        csv::Writer w(o);
        w.header({"period", "point_index", "x", "y", "mx", "my"});
        for (const auto& f : fits) {
            const auto& mf = f.mean_field;
            for (Eigen::Index j = 0; j < mf.momenta.rows(); ++j) {
                w.field(f.period).field(static_cast<long long>(j)).field(mf.control_points(j, 0));
                w.field(mf.control_points(j, 1)).field(mf.momenta(j, 0)).field(mf.momenta(j, 1));
                w.end_row();
            }
        }
    }
    {
        auto o = open_out(out / "plots/pc_deformations.csv");
        csv::Writer w(o);
        w.header({"period", "pc", "direction", "point_index", "x", "y", "mx", "my", "x_end", "y_end"});
        for (const auto& f : fits) {
            const Eigen::Index m = std::min<Eigen::Index>(3, f.mfpca.retained());
            for (Eigen::Index l = 1; l <= m; ++l) {
                for (int dir : {1, -1}) {
                    const auto field =
                        fpca::pc_deformation(f.mfpca, f.mean_field, l, dir * std::sqrt(f.mfpca.eigenvalues[l - 1]));
                    const geo::Points end = geo::apply_momenta(field, cfg.kernel);
                    for (Eigen::Index j = 0; j < field.momenta.rows(); ++j) {
                        w.field(f.period).field(static_cast<long long>(l)).field(dir).field(static_cast<long long>(j));
                        w.field(field.control_points(j, 0)).field(field.control_points(j, 1));
                        w.field(field.momenta(j, 0)).field(field.momenta(j, 1)).field(end(j, 0)).field(end(j, 1));
                        w.end_row();
                    }
                }
            }
        }
    }
    {
        const json concat = read_json(out / "concat_summary.json");
        auto o = open_out(out / "plots/eigenfunction_overlay.csv");
        csv::Writer w(o);
        w.header({"period", "component", "domain", "point_index", "grid", "mfpca", "concat"});
        for (const auto& f : fits) {
            const json* entry = nullptr;
            for (const auto& c : concat)
                if (c.at("period") == f.period) entry = &c;
            if (!entry) throw InvalidInputError("concat_summary.json has no period " + std::to_string(f.period));
            for (const auto& comp : entry->at("comparison")) {
                const Eigen::Index l = comp.at("component").get<Eigen::Index>();
                for (const char* dom : {"x", "y"}) {
                    const bool is_x = dom[0] == 'x';
                    const auto vals = comp.at(is_x ? "concat_x" : "concat_y").get<std::vector<double>>();
                    const Eigen::MatrixXd& psi = is_x ? f.mfpca.eigenfunctions_x : f.mfpca.eigenfunctions_y;
                    const Eigen::VectorXd& grid = is_x ? f.x.grid : f.y.grid;
                    for (Eigen::Index j = 0; j < psi.cols(); ++j) {
                        w.field(f.period).field(static_cast<long long>(l)).field(std::string_view(dom));
                        w.field(static_cast<long long>(j)).field(grid[j]).field(psi(l - 1, j));
                        w.field(vals[static_cast<std::size_t>(j)]);
                        w.end_row();
                    }
                }
            }
        }
    }
    {
        // Model 1 predictions over each period's observed energy range, the
        // other terms held at their period means.
        const assoc::FeatureTable t = load_features(out);
        const json rep = read_json(out / "report.json");
        const json& coefs = rep.at("models").at(0).at("full").at("coefficients");
        auto o = open_out(out / "plots/interaction.csv");
        csv::Writer w(o);
        w.header({"period", "energy", "predicted_pf"});
        const std::set<int> ps(t.periods.begin(), t.periods.end());
        constexpr int kPoints = 50;
        for (int period : ps) {
            std::vector<std::size_t> rows;
            for (std::size_t i = 0; i < t.rows(); ++i)
                if (t.periods[i] == period) rows.push_back(i);
            const assoc::FeatureTable sub = t.subset(rows);
            const Eigen::VectorXd e = sub.column("energy");
            const double lo = e.minCoeff(), hi = e.maxCoeff();
            for (int k = 0; k < kPoints; ++k) {
                const double energy = k == kPoints - 1 ? hi : lo + (hi - lo) * k / (kPoints - 1);
                double pred = 0.0;
                for (const auto& c : coefs) {
                    const std::string term = c.at("term");
                    const double beta = c.at("estimate");
                    double v = 1.0;
                    if (term != "(Intercept)") {
                        std::stringstream ss(term);
                        std::string factor;
                        while (std::getline(ss, factor, ':')) {
                            if (factor == "energy") v *= energy;
                            else if (factor == "period") v *= period;
                            else v *= sub.column(factor).mean();
                        }
                    }
                    pred += beta * v;
                }
                w.field(period).field(energy).field(pred);
                w.end_row();
            }
        }
    }
}

} // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, Stage last) {
    try {
        cfg.validate();
    } catch (const InvalidInputError& e) {
        throw StageError("config", {}, e.what(), false);
    }
    Runner run(cfg);
    const fs::path& out = run.out();
    const json settings = result_settings(cfg);
    const auto done = [&](Stage s) { return static_cast<int>(s) > static_cast<int>(last); };

    run.stage(Stage::Prep, {{"minutes", sha256_file(cfg.minutes)}, {"prep", settings["prep"]}},
              {"curves.csv", "prep_summary.json"}, [&] { run_prep(cfg, out); });
    if (done(Stage::Match)) return {out, run.records()};

    run.stage(Stage::Match,
              {{"curves", run.hash("curves.csv")}, {"kernel", settings["kernel"]}, {"match", settings["match"]}},
              {"momenta.csv", "energies.csv", "match_summary.json"}, [&] { run_match(cfg, out); });
    if (done(Stage::Mfpca)) return {out, run.records()};

    std::vector<int> periods;
    std::map<int, std::vector<geo::MomentaField>> by;
    try {
        by = momenta_by_period(out);
    } catch (const std::exception& e) {
        throw StageError("mfpca", {}, std::string("mfpca: ") + e.what(), false);
    }
    for (const auto& [p, v] : by) periods.push_back(p);
    run.stage(Stage::Mfpca, {{"momenta", run.hash("momenta.csv")}, {"fpca", settings["fpca"]}}, mfpca_outputs(periods),
              [&] { run_mfpca(cfg, out, by); });
    if (done(Stage::Features)) return {out, run.records()};

    run.stage(Stage::Features,
              {{"scores", run.hash("scores.csv")},
               {"energies", run.hash("energies.csv")},
               {"outcomes", sha256_file(cfg.outcomes)},
               {"covariates", cfg.covariates.empty() ? "" : sha256_file(cfg.covariates)},
               {"categorical_reference", settings["inputs"]["categorical_reference"]}},
              {"features.csv", "features_summary.json"}, [&] { run_features(cfg, out); });
    if (done(Stage::Assoc)) return {out, run.records()};

    run.stage(Stage::Assoc, {{"features", run.hash("features.csv")}, {"assoc", settings["assoc"]}},
              {"report.json", "report.txt"}, [&] { run_assoc(cfg, out); });
    if (done(Stage::Plots)) return {out, run.records()};

    json fp = json::object();
    for (int p : periods) fp[std::to_string(p)] = run.hash("fpca_period" + std::to_string(p) + ".json");
    run.stage(Stage::Plots,
              {{"fpca", fp},
               {"concat", run.hash("concat_summary.json")},
               {"features", run.hash("features.csv")},
               {"report", run.hash("report.json")},
               {"kernel", settings["kernel"]}},
              plot_outputs(), [&] { run_plots(cfg, out, periods); });
    return {out, run.records()};
}

} // namespace dpa::harness
