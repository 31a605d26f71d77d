#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "config_json.hpp"
#include "dpa/csv.hpp"
#include "dpa/errors.hpp"
#include "dpa/harness.hpp"
#include "dpa/parallel.hpp"

namespace dpa::harness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Independent substream per (participant, purpose); never depends on the
// worker count.
std::mt19937_64 substream(std::uint64_t seed, std::size_t participant, std::uint32_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(participant), static_cast<std::uint32_t>(participant >> 32), tag};
    return std::mt19937_64(seq);
}

struct Bump {
    double amplitude, center, width;
};

struct SmoothBump {
    double ax, ay, center, width;
};

struct Participant {
    std::string id;
    std::vector<Bump> bumps;
    std::array<double, 3> axis{};  // unit split of the vector magnitude
    double age = kNaN;
    std::string site;
    double baseline_pf = 0.0;
    double random_intercept = 0.0;
    std::array<double, 2> loading{};
    std::array<double, 2> drift_scale{};
    std::array<std::vector<SmoothBump>, 2> noise;
    std::array<double, 2> residual{};
    std::array<bool, 2> outcome_missing{};
    std::array<geo::Points, 2> momenta;
};

double gauss(double x, double c, double w) { return std::exp(-0.5 * (x - c) * (x - c) / (w * w)); }

double taper(double x) { return std::max(0.0, 1.0 - x * x); }

Eigen::VectorXd baseline_counts(const Participant& p, const SimConfig& cfg) {
    Eigen::VectorXd c = Eigen::VectorXd::Constant(prep::kWindowMinutes, cfg.bumps.base_level);
    for (Eigen::Index t = 0; t < c.size(); ++t) {
        const double minute = static_cast<double>(t + 1);
        for (const auto& b : p.bumps) c[t] += b.amplitude * gauss(minute, b.center, b.width);
    }
    return c;
}

Participant draw_participant(const SimConfig& cfg, std::size_t index) {
    auto rng = substream(cfg.seed, index, 1);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Participant p;
    char id[32];
    std::snprintf(id, sizeof id, "P%05zu", index + 1);
    p.id = id;

    const auto& bm = cfg.bumps;
    const int nb = std::uniform_int_distribution<int>(bm.min_bumps, bm.max_bumps)(rng);
    for (int k = 0; k < nb; ++k) {
        Bump b;
        b.amplitude = std::max(0.2 * bm.amplitude_mean, bm.amplitude_mean + bm.amplitude_sd * z(rng));
        b.center = bm.location_lo + (bm.location_hi - bm.location_lo) * u(rng);
        b.width = bm.width_lo + (bm.width_hi - bm.width_lo) * u(rng);
        p.bumps.push_back(b);
    }
    Eigen::Vector3d axis(1.0 + 0.1 * z(rng), 0.6 + 0.1 * z(rng), 0.4 + 0.1 * z(rng));
    axis = axis.cwiseAbs().normalized();
    p.axis = {axis[0], axis[1], axis[2]};

    p.age = 70.0 + 6.0 * z(rng);
    static const char* sites[] = {"A", "B", "C"};
    p.site = sites[std::uniform_int_distribution<int>(0, 2)(rng)];
    if (u(rng) < cfg.missing.covariate) p.age = kNaN;
    if (u(rng) < cfg.missing.covariate) p.site.clear();

    const auto& ol = cfg.outcome;
    p.baseline_pf = std::clamp(ol.baseline_mean + ol.baseline_sd * z(rng), 0.0, 100.0);
    p.random_intercept = ol.random_sd * z(rng);
    for (int eta = 0; eta < 2; ++eta) {
        const auto& law = cfg.periods[static_cast<std::size_t>(eta)];
        p.loading[eta] = law.loading_sd * z(rng);
        p.drift_scale[eta] = law.drift_scale_sd * z(rng);
        for (int k = 0; k < law.noise_bumps; ++k) {
            SmoothBump b;
            b.center = -1.0 + 2.0 * u(rng);
            b.width = 0.15 + 0.25 * u(rng);
            b.ax = law.noise_sd * z(rng);
            b.ay = law.noise_sd * z(rng);
            p.noise[eta].push_back(b);
        }
        p.residual[eta] = ol.noise_sd * z(rng);
        p.outcome_missing[eta] = u(rng) < cfg.missing.outcome;
    }
    return p;
}

geo::Points mode_field(const Eigen::VectorXd& x, const ModeLaw& m) {
    geo::Points out(x.size(), 2);
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double g = gauss(x[j], m.center, m.width);
        out(j, 0) = m.x_amplitude * g * taper(x[j]);
        out(j, 1) = m.y_amplitude * g;
    }
    return out;
}

geo::Points drift_field(const Eigen::VectorXd& x, const PeriodLaw& law) {
    geo::Points out(x.size(), 2);
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        out(j, 0) = law.drift_shift * taper(x[j]);
        out(j, 1) = law.drift_lift;
    }
    return out;
}

// Resamples a deformed polyline at the grid abscissae; values beyond its
// ends are held at the end values.
Eigen::VectorXd resample(const geo::Points& poly, const Eigen::VectorXd& grid) {
    std::vector<std::pair<double, double>> pts(static_cast<std::size_t>(poly.rows()));
    for (Eigen::Index i = 0; i < poly.rows(); ++i) pts[static_cast<std::size_t>(i)] = {poly(i, 0), poly(i, 1)};
    std::sort(pts.begin(), pts.end());
    Eigen::VectorXd out(grid.size());
    std::size_t k = 0;
    for (Eigen::Index t = 0; t < grid.size(); ++t) {
        const double x = grid[t];
        if (x <= pts.front().first) {
            out[t] = pts.front().second;
            continue;
        }
        if (x >= pts.back().first) {
            out[t] = pts.back().second;
            continue;
        }
        while (k + 1 < pts.size() && pts[k + 1].first < x) ++k;
        const auto& [x0, y0] = pts[k];
        const auto& [x1, y1] = pts[k + 1];
        out[t] = x1 > x0 ? y0 + (y1 - y0) * (x - x0) / (x1 - x0) : y1;
    }
    return out;
}

prep::VisitBlock minutes_for(const SimConfig& cfg, const Participant& p, prep::Visit visit,
                             const Eigen::VectorXd& counts, std::mt19937_64& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    prep::VisitBlock block;
    block.participant_id = p.id;
    block.visit = visit;
    for (int d = 1; d <= cfg.days_per_visit; ++d) {
        prep::DayRecord day = prep::DayRecord::empty(d);
        const double level = std::exp(cfg.day_sd * z(rng));
        int gap_start = prep::kWindowMinutes, gap_end = prep::kWindowMinutes;
        if (u(rng) < cfg.missing.wear_gap_day) {
            const int len = std::uniform_int_distribution<int>(cfg.missing.gap_min, cfg.missing.gap_max)(rng);
            gap_start = std::uniform_int_distribution<int>(0, prep::kWindowMinutes - len)(rng);
            gap_end = gap_start + len;
        }
        for (int m = 0; m < prep::kWindowMinutes; ++m) {
            const double noise = z(rng);
            if (m >= gap_start && m < gap_end) continue;  // non-wear, zero counts
            const double v = std::max(0.0, counts[m] * level * (1.0 + cfg.minute_noise_cv * noise));
            day.counts[static_cast<std::size_t>(m)] = {std::round(v * p.axis[0]), std::round(v * p.axis[1]),
                                                       std::round(v * p.axis[2])};
            day.wear[static_cast<std::size_t>(m)] = 1;
        }
        block.days.push_back(std::move(day));
    }
    return block;
}

} // namespace

void SimConfig::validate() const {
    auto fail = [](const std::string& m) { throw InvalidInputError("simulation config: " + m); };
    if (n_participants < 2) fail("n_participants must be >= 2");
    if (visits != 2 && visits != 3) fail("visits must be 2 or 3");
    if (days_per_visit < 1) fail("days_per_visit must be >= 1");
    if (bumps.min_bumps < 1 || bumps.max_bumps < bumps.min_bumps) fail("bump counts must satisfy 1 <= min <= max");
    if (!(bumps.amplitude_mean > 0.0) || bumps.amplitude_sd < 0.0) fail("bump amplitudes must be positive");
    if (!(bumps.width_lo > 0.0) || bumps.width_hi < bumps.width_lo) fail("bump widths must satisfy 0 < lo <= hi");
    if (bumps.location_hi < bumps.location_lo) fail("bump location range is empty");
    if (minute_noise_cv < 0.0 || day_sd < 0.0) fail("noise levels must be >= 0");
    for (double r : {missing.outcome, missing.covariate, missing.wear_gap_day})
        if (!(r >= 0.0 && r <= 1.0)) fail("missingness rates must lie in [0, 1]");
    if (missing.gap_min < 1 || missing.gap_max < missing.gap_min || missing.gap_max > prep::kWindowMinutes)
        fail("wear gap lengths must satisfy 1 <= min <= max <= 1080");
    if (!(mode.width > 0.0)) fail("mode width must be positive");
    for (const auto& law : periods) {
        if (law.loading_sd < 0.0 || law.drift_scale_sd < 0.0 || law.noise_sd < 0.0 || law.noise_bumps < 0)
            fail("period spreads must be >= 0");
    }
    if (outcome.noise_sd < 0.0 || outcome.random_sd < 0.0 || outcome.baseline_sd < 0.0)
        fail("outcome spreads must be >= 0");
    if (control_stride < 1 || prep::kWindowMinutes % control_stride != 0)
        fail("control_stride must divide 1080");
    if (!(sigma_v > 0.0) || n_steps < 1) fail("sigma_v and n_steps must be positive");
}

SimTruth simulate_cohort(const SimConfig& cfg, const BlockSink& sink, int workers) {
    cfg.validate();
    const std::size_t n = static_cast<std::size_t>(cfg.n_participants);
    const int n_periods = cfg.visits - 1;

    std::vector<Participant> people(n);
    parallel_for(n, workers, [&](std::size_t i) { people[i] = draw_participant(cfg, i); });

    SimTruth truth;
    truth.config = cfg;

    // Scaling from the noiseless baseline curves.
    {
        double sum = 0.0, sum2 = 0.0;
        for (const auto& p : people) {
            const Eigen::VectorXd c = baseline_counts(p, cfg);
            sum += c.sum();
            sum2 += c.squaredNorm();
        }
        const double m = static_cast<double>(n) * prep::kWindowMinutes;
        truth.scaling.grand_mean = sum / m;
        truth.scaling.grand_sd = std::sqrt(std::max(0.0, (sum2 - sum * sum / m) / (m - 1.0)));
        if (!(truth.scaling.grand_sd > 0.0)) throw InvalidInputError("simulate_cohort: baseline curves are constant");
    }

    const Eigen::VectorXd grid = prep::scaled_grid();
    const Eigen::Index stride = cfg.control_stride;
    const Eigen::Index pc = prep::kWindowMinutes / stride;
    Eigen::VectorXd cx(pc);
    for (Eigen::Index j = 0; j < pc; ++j) cx[j] = grid[j * stride];
    truth.mode = mode_field(cx, cfg.mode);
    for (int eta = 0; eta < 2; ++eta) truth.drift[eta] = drift_field(cx, cfg.periods[static_cast<std::size_t>(eta)]);

    // Planted momenta and energies.
    std::vector<double> energies;
    for (auto& p : people) {
        for (int eta = 0; eta < n_periods; ++eta) {
            const auto& law = cfg.periods[static_cast<std::size_t>(eta)];
            geo::Points m = (1.0 + p.drift_scale[eta]) * truth.drift[eta] +
                            (law.loading_sd > 0.0 ? p.loading[eta] : 0.0) * truth.mode;
            for (Eigen::Index j = 0; j < pc; ++j) {
                for (const auto& b : p.noise[eta]) {
                    const double g = gauss(cx[j], b.center, b.width);
                    m(j, 0) += b.ax * g * taper(cx[j]);
                    m(j, 1) += b.ay * g;
                }
            }
            p.momenta[eta] = m;
            energies.push_back(geo::deformation_energy(m));
        }
    }
    double e_mean = 0.0, e_sd = 0.0;
    for (double e : energies) e_mean += e;
    e_mean /= static_cast<double>(energies.size());
    for (double e : energies) e_sd += (e - e_mean) * (e - e_mean);
    e_sd = energies.size() > 1 ? std::sqrt(e_sd / static_cast<double>(energies.size() - 1)) : 0.0;

    // Outcomes.
    const auto& ol = cfg.outcome;
    for (const auto& p : people) {
        truth.participant_ids.push_back(p.id);
        truth.age.push_back(p.age);
        truth.site.push_back(p.site);
        for (int eta = 0; eta < n_periods; ++eta) {
            const auto& law = cfg.periods[static_cast<std::size_t>(eta)];
            TruthRow r;
            r.participant_id = p.id;
            r.period = eta;
            r.loading = p.loading[eta];
            r.energy = geo::deformation_energy(p.momenta[eta]);
            r.energy_z = e_sd > 0.0 ? (r.energy - e_mean) / e_sd : 0.0;
            const double age = std::isfinite(p.age) ? p.age : 70.0;
            const double std_loading = law.loading_sd > 0.0 ? r.loading / law.loading_sd : 0.0;
            const double pf = ol.intercept + ol.beta_loading * std_loading + ol.beta_energy * r.energy_z +
                              ol.beta_period * eta + ol.beta_energy_period * r.energy_z * eta +
                              ol.beta_baseline * (p.baseline_pf - ol.baseline_mean) +
                              ol.beta_age * (age - 70.0) + p.random_intercept + p.residual[eta];
            r.pf = std::clamp(pf, 0.0, 100.0);
            truth.rows.push_back(r);
            truth.outcomes.push_back({p.id, eta, p.outcome_missing[eta] ? kNaN : r.pf, p.baseline_pf});
        }
    }

    // Curves and minute data, generated in chunks and emitted in order.
    const auto& sc = truth.scaling;
    const std::size_t chunk = static_cast<std::size_t>(std::max(1, resolve_workers(workers))) * 8;
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t count = std::min(chunk, n - start);
        std::vector<std::vector<prep::VisitBlock>> blocks(count);
        parallel_for(count, workers, [&](std::size_t k) {
            const std::size_t i = start + k;
            const Participant& p = people[i];
            auto rng = substream(cfg.seed, i, 2);
            Eigen::VectorXd counts = baseline_counts(p, cfg);
            blocks[k].push_back(minutes_for(cfg, p, prep::Visit::Baseline, counts, rng));
            for (int eta = 0; eta < n_periods; ++eta) {
                geo::Points poly(grid.size(), 2);
                poly.col(0) = grid;
                poly.col(1) = (counts.array() - sc.grand_mean) / (4.0 * sc.grand_sd);
                geo::Points q0(pc, 2);
                for (Eigen::Index j = 0; j < pc; ++j) q0.row(j) = poly.row(j * stride);
                const geo::Points moved = geo::flow_points(q0, p.momenta[eta], poly, cfg.sigma_v, cfg.n_steps);
                const Eigen::VectorXd y = resample(moved, grid);
                counts = (sc.grand_mean + 4.0 * sc.grand_sd * y.array()).max(0.0).matrix();
                blocks[k].push_back(minutes_for(cfg, p, static_cast<prep::Visit>(eta + 1), counts, rng));
            }
        });
        for (const auto& bs : blocks)
            for (const auto& b : bs) sink(b);
    }
    return truth;
}

SimFiles simulate_to_dir(const SimConfig& cfg, const std::filesystem::path& dir, int workers) {
    std::filesystem::create_directories(dir);
    SimFiles files{dir / "minutes.csv", dir / "outcomes.csv", dir / "covariates.csv", dir / "truth.json",
                   dir / "truth.csv"};
    std::ofstream minutes(files.minutes, std::ios::binary);
    if (!minutes) throw InvalidInputError("cannot write " + files.minutes.string());
    prep::write_minute_csv_header(minutes);
    const SimTruth truth =
        simulate_cohort(cfg, [&](const prep::VisitBlock& b) { prep::write_minute_csv(minutes, b); }, workers);
    minutes.close();

    {
        std::ofstream out(files.outcomes, std::ios::binary);
        csv::Writer w(out);
        w.header({"participant_id", "period", "pf", "baseline_pf"});
        for (const auto& o : truth.outcomes) {
            w.field(o.participant_id).field(o.period);
            std::isfinite(o.pf) ? w.field(o.pf) : w.field(std::string_view(""));
            std::isfinite(o.baseline_pf) ? w.field(o.baseline_pf) : w.field(std::string_view(""));
            w.end_row();
        }
    }
    {
        std::ofstream out(files.covariates, std::ios::binary);
        csv::Writer w(out);
        w.header({"participant_id", "age", "site"});
        for (std::size_t i = 0; i < truth.participant_ids.size(); ++i) {
            w.field(truth.participant_ids[i]);
            std::isfinite(truth.age[i]) ? w.field(truth.age[i]) : w.field(std::string_view(""));
            w.field(truth.site[i]);
            w.end_row();
        }
    }
    {
        std::ofstream out(files.truth_rows, std::ios::binary);
        csv::Writer w(out);
        w.header({"participant_id", "period", "loading", "energy", "energy_z", "pf"});
        for (const auto& r : truth.rows) {
            w.field(r.participant_id).field(r.period).field(r.loading).field(r.energy).field(r.energy_z).field(r.pf);
            w.end_row();
        }
    }
    {
        nlohmann::json j;
        j["config"] = nlohmann::json::parse(to_json(cfg));
        j["scaling"] = {{"grand_mean", truth.scaling.grand_mean}, {"grand_sd", truth.scaling.grand_sd}};
        auto pts = [](const geo::Points& p) {
            nlohmann::json a = nlohmann::json::array();
            for (Eigen::Index i = 0; i < p.rows(); ++i) a.push_back({p(i, 0), p(i, 1)});
            return a;
        };
        j["mode_momenta"] = pts(truth.mode);
        j["drift_momenta"] = {pts(truth.drift[0]), pts(truth.drift[1])};
        j["outcome_law"] = nlohmann::json::parse(to_json(cfg))["outcome"];
        j["rows"] = "truth.csv";
        std::ofstream out(files.truth, std::ios::binary);
        out << j.dump(1) << '\n';
    }
    return files;
}

} // namespace dpa::harness
