#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace dpa::prep {

// 6:00 to midnight.
inline constexpr int kWindowStartMinute = 360;
inline constexpr int kWindowMinutes = 1080;
inline constexpr int kMinutesPerDay = 1440;

enum class Visit : std::uint8_t { Baseline = 0, W1 = 1, W2 = 2 };

std::string_view to_string(Visit v);
Visit parse_visit(std::string_view s);

struct AxisCounts {
    double vertical = 0.0;
    double horizontal = 0.0;
    double perpendicular = 0.0;
};

struct MinuteRecord {
    std::string participant_id;
    Visit visit = Visit::Baseline;
    int day_index = 1;
    int minute_of_day = 0;
    AxisCounts counts;
    bool wear = true;
};

/// Vector magnitude of tri-axial counts. Throws InvalidInputError on a
/// negative or non-finite component.
double compute_vm(const AxisCounts& c);

// One calendar day restricted to the analysis window. Minutes absent from
// the input are stored as non-wear with zero counts.
struct DayRecord {
    int day_index = 0;
    std::vector<AxisCounts> counts;  // kWindowMinutes entries
    std::vector<std::uint8_t> wear;  // kWindowMinutes entries, 0/1

    static DayRecord empty(int day_index);
    int wear_minutes() const;
};

// All days of one participant-visit, ordered by day_index.
struct VisitBlock {
    std::string participant_id;
    Visit visit = Visit::Baseline;
    std::vector<DayRecord> days;
};

// Groups minute rows into participant-visit blocks, dropping minutes outside
// the window. Blocks are ordered by (participant_id, visit). Throws on
// duplicate minutes within a day or invalid fields.
std::vector<VisitBlock> group_records(std::span<const MinuteRecord> records);

struct ValidDayRules {
    int max_nonwear_minutes = 240;  // a day is dropped at >= this much non-wear
    int min_wear_minutes = 840;
    int min_valid_days = 4;
};

struct DayFilterResult {
    std::vector<DayRecord> retained;
    std::vector<int> dropped_days;
    std::optional<std::string> excluded_reason;  // set when the visit is excluded

    bool valid() const { return !excluded_reason.has_value(); }
};

DayFilterResult filter_valid_days(const VisitBlock& block, const ValidDayRules& rules = {});
DayFilterResult filter_valid_days(std::span<const MinuteRecord> records,
                                  const ValidDayRules& rules = {});

// ---------------------------------------------------------------------------
// Curves
// ---------------------------------------------------------------------------

enum class CurveStage : std::uint8_t { RawMean, Smoothed, Scaled };

struct DiurnalCurve {
    std::string participant_id;
    Visit visit = Visit::Baseline;
    Eigen::VectorXd grid;
    Eigen::VectorXd values;
    CurveStage stage = CurveStage::RawMean;

    Eigen::Index size() const { return values.size(); }
};

/// Minute grid 1..kWindowMinutes.
Eigen::VectorXd minute_grid();
/// Affine map of minute t onto [-1, 1]: 2(t-1)/(n-1) - 1.
Eigen::VectorXd scaled_grid(Eigen::Index n = kWindowMinutes);

/// Per-minute mean across days, averaging only wear minutes. Minutes with no
/// wear on any day are linearly interpolated from the nearest wear minutes.
DiurnalCurve average_daily_profile(const std::string& participant_id, Visit visit,
                                   std::span<const DayRecord> days, int min_days = 4);

DiurnalCurve smooth_curve(const DiurnalCurve& curve, double target_df = 25.0);

struct ScalingParams {
    double grand_mean = 0.0;
    double grand_sd = 1.0;
};

/// Pooled mean and sample SD (n-1) over every value of every curve.
ScalingParams fit_scaling(std::span<const DiurnalCurve> curves);

DiurnalCurve scale_curve(const DiurnalCurve& curve, const ScalingParams& params);
DiurnalCurve unscale_curve(const DiurnalCurve& curve, const ScalingParams& params);

/// Trapezoid integral of the curve over its grid.
double net_auc(const DiurnalCurve& curve);
/// net_auc(later) - net_auc(earlier); the grids must agree.
double delta_net_auc(const DiurnalCurve& earlier, const DiurnalCurve& later);

// ---------------------------------------------------------------------------
// IO
// ---------------------------------------------------------------------------

// Columns: participant_id,visit,day,minute,va,ha,ppa,wear
std::vector<VisitBlock> read_minute_csv(std::istream& in, const std::string& source = "<minutes>");
void write_minute_csv_header(std::ostream& out);
void write_minute_csv(std::ostream& out, const VisitBlock& block);

// Columns: participant_id,visit,x,y
void write_curves_csv(std::ostream& out, std::span<const DiurnalCurve> curves);
std::vector<DiurnalCurve> read_curves_csv(std::istream& in, CurveStage stage = CurveStage::Scaled,
                                          const std::string& source = "<curves>");

} // namespace dpa::prep
