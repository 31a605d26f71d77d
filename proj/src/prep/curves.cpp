#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include "dpa/csv.hpp"
#include "dpa/errors.hpp"
#include "dpa/prep.hpp"
#include "dpa/smoothing_spline.hpp"

namespace dpa::prep {

Eigen::VectorXd minute_grid() {
    return Eigen::VectorXd::LinSpaced(kWindowMinutes, 1.0, static_cast<double>(kWindowMinutes));
}

Eigen::VectorXd scaled_grid(Eigen::Index n) {
    Eigen::VectorXd g(n);
    for (Eigen::Index i = 0; i < n; ++i)
        g[i] = 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0;
    return g;
}

DiurnalCurve average_daily_profile(const std::string& participant_id, Visit visit,
                                   std::span<const DayRecord> days, int min_days) {
    if (static_cast<int>(days.size()) < std::max(min_days, 1)) {
        throw InvalidInputError("average_daily_profile: " + std::to_string(days.size()) +
                                " retained day(s), need at least " + std::to_string(min_days));
    }

    Eigen::VectorXd sum = Eigen::VectorXd::Zero(kWindowMinutes);
    Eigen::VectorXi count = Eigen::VectorXi::Zero(kWindowMinutes);
    for (const auto& day : days) {
        if (static_cast<int>(day.counts.size()) != kWindowMinutes ||
            static_cast<int>(day.wear.size()) != kWindowMinutes)
            throw InvalidInputError("average_daily_profile: day record must cover the window");
        for (int m = 0; m < kWindowMinutes; ++m) {
            if (!day.wear[m]) continue;
            sum[m] += compute_vm(day.counts[m]);
            count[m] += 1;
        }
    }

    Eigen::VectorXd mean(kWindowMinutes);
    std::vector<int> observed;
    for (int m = 0; m < kWindowMinutes; ++m) {
        if (count[m] > 0) {
            mean[m] = sum[m] / count[m];
            observed.push_back(m);
        }
    }
    if (observed.empty())
        throw InvalidInputError("average_daily_profile: no wear minutes for participant " +
                                participant_id);

    // Fill minutes with no wear on any day: linear between neighbours,
    // constant beyond the first/last observed minute.
    std::size_t k = 0;
    for (int m = 0; m < kWindowMinutes; ++m) {
        if (count[m] > 0) continue;
        while (k + 1 < observed.size() && observed[k + 1] < m) ++k;
        if (m < observed.front()) {
            mean[m] = mean[observed.front()];
        } else if (m > observed.back()) {
            mean[m] = mean[observed.back()];
        } else {
            const int a = observed[k];
            const int b = observed[k + 1];
            const double w = static_cast<double>(m - a) / static_cast<double>(b - a);
            mean[m] = (1.0 - w) * mean[a] + w * mean[b];
        }
    }

    DiurnalCurve c;
    c.participant_id = participant_id;
    c.visit = visit;
    c.grid = minute_grid();
    c.values = std::move(mean);
    c.stage = CurveStage::RawMean;
    return c;
}

DiurnalCurve smooth_curve(const DiurnalCurve& curve, double target_df) {
    if (curve.grid.size() != curve.values.size())
        throw InvalidInputError("smooth_curve: grid and values differ in length");
    if (!curve.values.allFinite()) throw InvalidInputError("smooth_curve: non-finite value");
    const SmoothingSpline spline(curve.grid);
    const double lambda = spline.lambda_for_df(target_df);
    DiurnalCurve out = curve;
    out.values = spline.smooth(curve.values, lambda);
    out.stage = CurveStage::Smoothed;
    return out;
}

ScalingParams fit_scaling(std::span<const DiurnalCurve> curves) {
    if (curves.size() < 2) throw InvalidInputError("fit_scaling: need at least two curves");
    // Two passes over every participant-visit-minute value.
    double n = 0.0;
    double sum = 0.0;
    for (const auto& c : curves) {
        for (Eigen::Index i = 0; i < c.values.size(); ++i) {
            const double v = c.values[i];
            if (!std::isfinite(v)) throw InvalidInputError("fit_scaling: non-finite curve value");
            n += 1.0;
            sum += v;
        }
    }
    const double mean = sum / n;
    double m2 = 0.0;
    for (const auto& c : curves) m2 += (c.values.array() - mean).square().sum();
    if (n < 2.0) throw InvalidInputError("fit_scaling: fewer than two values");
    const double sd = std::sqrt(m2 / (n - 1.0));
    if (!(sd > 0.0)) throw DegenerateDataError("fit_scaling: pooled SD is zero");
    return {mean, sd};
}

DiurnalCurve scale_curve(const DiurnalCurve& curve, const ScalingParams& params) {
    if (!(params.grand_sd > 0.0)) throw InvalidInputError("scale_curve: grand_sd must be > 0");
    DiurnalCurve out = curve;
    out.values = (curve.values.array() - params.grand_mean) / (4.0 * params.grand_sd);
    out.grid = scaled_grid(curve.values.size());
    out.stage = CurveStage::Scaled;
    return out;
}

DiurnalCurve unscale_curve(const DiurnalCurve& curve, const ScalingParams& params) {
    DiurnalCurve out = curve;
    out.values = curve.values.array() * (4.0 * params.grand_sd) + params.grand_mean;
    out.grid = Eigen::VectorXd::LinSpaced(curve.values.size(), 1.0,
                                          static_cast<double>(curve.values.size()));
    out.stage = CurveStage::Smoothed;
    return out;
}

double net_auc(const DiurnalCurve& curve) {
    const auto& x = curve.grid;
    const auto& y = curve.values;
    if (x.size() != y.size() || x.size() < 2)
        throw InvalidInputError("net_auc: need matching grid and values with >= 2 points");
    double area = 0.0;
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) area += 0.5 * (x[i + 1] - x[i]) * (y[i] + y[i + 1]);
    return area;
}

double delta_net_auc(const DiurnalCurve& earlier, const DiurnalCurve& later) {
    if (earlier.grid.size() != later.grid.size() ||
        (earlier.grid - later.grid).cwiseAbs().maxCoeff() > 1e-12)
        throw InvalidInputError("delta_net_auc: curves are not on the same grid");
    return net_auc(later) - net_auc(earlier);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

void write_curves_csv(std::ostream& out, std::span<const DiurnalCurve> curves) {
    csv::Writer w(out);
    w.header({"participant_id", "visit", "x", "y"});
    for (const auto& c : curves) {
        const std::string visit(to_string(c.visit));
        for (Eigen::Index i = 0; i < c.values.size(); ++i) {
            w.field(std::string_view(c.participant_id))
                .field(std::string_view(visit))
                .field(c.grid[i])
                .field(c.values[i]);
            w.end_row();
        }
    }
}

std::vector<DiurnalCurve> read_curves_csv(std::istream& in, CurveStage stage,
                                          const std::string& source) {
    csv::Reader reader(in, source);
    const auto c_pid = reader.column("participant_id");
    const auto c_visit = reader.column("visit");
    const auto c_x = reader.column("x");
    const auto c_y = reader.column("y");

    std::map<std::pair<std::string, Visit>, std::pair<std::vector<double>, std::vector<double>>> acc;
    std::vector<std::pair<std::string, Visit>> order;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        std::pair<std::string, Visit> key{std::string(f[c_pid]), parse_visit(f[c_visit])};
        auto it = acc.find(key);
        if (it == acc.end()) {
            it = acc.emplace(key, std::pair<std::vector<double>, std::vector<double>>{}).first;
            order.push_back(key);
        }
        it->second.first.push_back(reader.to_double(f[c_x], "x"));
        it->second.second.push_back(reader.to_double(f[c_y], "y"));
    }

    std::vector<DiurnalCurve> out;
    for (const auto& key : order) {
        const auto& [xs, ys] = acc.at(key);
        DiurnalCurve c;
        c.participant_id = key.first;
        c.visit = key.second;
        c.grid = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
        c.values = Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
        c.stage = stage;
        for (Eigen::Index i = 0; i + 1 < c.grid.size(); ++i) {
            if (!(c.grid[i + 1] > c.grid[i]))
                throw InvalidInputError(source + ": grid not strictly increasing for participant " +
                                        key.first);
        }
        out.push_back(std::move(c));
    }
    return out;
}

} // namespace dpa::prep
