#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <tuple>

#include "dpa/csv.hpp"
#include "dpa/errors.hpp"
#include "dpa/prep.hpp"

namespace dpa::prep {

std::string_view to_string(Visit v) {
    switch (v) {
    case Visit::Baseline: return "Baseline";
    case Visit::W1: return "W1";
    case Visit::W2: return "W2";
    }
    return "?";
}

Visit parse_visit(std::string_view s) {
    if (s == "Baseline" || s == "baseline" || s == "0") return Visit::Baseline;
    if (s == "W1" || s == "w1" || s == "1") return Visit::W1;
    if (s == "W2" || s == "w2" || s == "2") return Visit::W2;
    throw InvalidInputError("unknown visit '" + std::string(s) + "' (expected Baseline, W1 or W2)");
}

double compute_vm(const AxisCounts& c) {
    for (double v : {c.vertical, c.horizontal, c.perpendicular}) {
        if (!std::isfinite(v) || v < 0.0)
            throw InvalidInputError("axis counts must be finite and non-negative");
    }
    return std::sqrt(c.vertical * c.vertical + c.horizontal * c.horizontal +
                     c.perpendicular * c.perpendicular);
}

DayRecord DayRecord::empty(int day_index) {
    DayRecord d;
    d.day_index = day_index;
    d.counts.assign(kWindowMinutes, AxisCounts{});
    d.wear.assign(kWindowMinutes, 0);
    return d;
}

int DayRecord::wear_minutes() const {
    return static_cast<int>(std::count(wear.begin(), wear.end(), std::uint8_t{1}));
}

std::vector<VisitBlock> group_records(std::span<const MinuteRecord> records) {
    using Key = std::pair<std::string, Visit>;
    std::map<Key, std::map<int, DayRecord>> grouped;
    std::map<Key, std::map<int, std::vector<std::uint8_t>>> seen;

    for (const auto& r : records) {
        if (r.minute_of_day < 0 || r.minute_of_day >= kMinutesPerDay)
            throw InvalidInputError("minute_of_day out of range 0-1439 for participant " +
                                    r.participant_id);
        if (r.day_index < 1)
            throw InvalidInputError("day index must be positive for participant " + r.participant_id);
        compute_vm(r.counts);  // validates the counts

        if (r.minute_of_day < kWindowStartMinute) continue;
        const int slot = r.minute_of_day - kWindowStartMinute;

        const Key key{r.participant_id, r.visit};
        auto& days = grouped[key];
        auto it = days.find(r.day_index);
        if (it == days.end()) it = days.emplace(r.day_index, DayRecord::empty(r.day_index)).first;

        auto& mask = seen[key][r.day_index];
        if (mask.empty()) mask.assign(kWindowMinutes, 0);
        if (mask[slot])
            throw InvalidInputError("duplicate minute " + std::to_string(r.minute_of_day) +
                                    " on day " + std::to_string(r.day_index) + " for participant " +
                                    r.participant_id + " visit " + std::string(to_string(r.visit)));
        mask[slot] = 1;

        it->second.counts[slot] = r.counts;
        it->second.wear[slot] = r.wear ? 1 : 0;
    }

    std::vector<VisitBlock> out;
    out.reserve(grouped.size());
    for (auto& [key, days] : grouped) {
        VisitBlock b;
        b.participant_id = key.first;
        b.visit = key.second;
        for (auto& [idx, day] : days) b.days.push_back(std::move(day));
        out.push_back(std::move(b));
    }
    return out;
}

DayFilterResult filter_valid_days(const VisitBlock& block, const ValidDayRules& rules) {
    if (block.days.empty()) throw InvalidInputError("filter_valid_days: empty record set");

    // Order-insensitive: evaluate days sorted by index.
    std::vector<const DayRecord*> days;
    for (const auto& d : block.days) days.push_back(&d);
    std::sort(days.begin(), days.end(),
              [](const DayRecord* a, const DayRecord* b) { return a->day_index < b->day_index; });

    DayFilterResult result;
    for (const DayRecord* d : days) {
        if (static_cast<int>(d->wear.size()) != kWindowMinutes ||
            static_cast<int>(d->counts.size()) != kWindowMinutes)
            throw InvalidInputError("day record must cover the full analysis window");
        const int wear = d->wear_minutes();
        const int nonwear = kWindowMinutes - wear;
        // The exclusion rule is applied first: exactly max_nonwear_minutes drops the day.
        const bool keep = nonwear < rules.max_nonwear_minutes && wear >= rules.min_wear_minutes;
        if (keep)
            result.retained.push_back(*d);
        else
            result.dropped_days.push_back(d->day_index);
    }
    if (static_cast<int>(result.retained.size()) < rules.min_valid_days)
        result.excluded_reason = "too few valid days";
    return result;
}

DayFilterResult filter_valid_days(std::span<const MinuteRecord> records, const ValidDayRules& rules) {
    if (records.empty()) throw InvalidInputError("filter_valid_days: empty record set");
    const auto& pid = records.front().participant_id;
    const auto visit = records.front().visit;
    for (const auto& r : records) {
        if (r.participant_id != pid || r.visit != visit)
            throw InvalidInputError("filter_valid_days: records span more than one participant-visit");
    }
    auto blocks = group_records(records);
    if (blocks.empty()) {
        // Every minute fell outside the window: nothing is wearable.
        DayFilterResult r;
        r.excluded_reason = "too few valid days";
        return r;
    }
    return filter_valid_days(blocks.front(), rules);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::vector<VisitBlock> read_minute_csv(std::istream& in, const std::string& source) {
    csv::Reader reader(in, source);
    const auto c_pid = reader.column("participant_id");
    const auto c_visit = reader.column("visit");
    const auto c_day = reader.column("day");
    const auto c_min = reader.column("minute");
    const auto c_va = reader.column("va");
    const auto c_ha = reader.column("ha");
    const auto c_ppa = reader.column("ppa");
    const auto c_wear = reader.column("wear");

    std::vector<MinuteRecord> rows;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        MinuteRecord r;
        r.participant_id = std::string(f[c_pid]);
        r.visit = parse_visit(f[c_visit]);
        r.day_index = static_cast<int>(reader.to_int(f[c_day], "day"));
        r.minute_of_day = static_cast<int>(reader.to_int(f[c_min], "minute"));
        r.counts = {reader.to_double(f[c_va], "va"), reader.to_double(f[c_ha], "ha"),
                    reader.to_double(f[c_ppa], "ppa")};
        const auto w = reader.to_int(f[c_wear], "wear");
        if (w != 0 && w != 1)
            throw InvalidInputError(source + ":" + std::to_string(reader.line_number()) +
                                    ": wear must be 0 or 1");
        r.wear = (w == 1);
        rows.push_back(std::move(r));
    }
    return group_records(rows);
}

void write_minute_csv_header(std::ostream& out) {
    csv::Writer w(out);
    w.header({"participant_id", "visit", "day", "minute", "va", "ha", "ppa", "wear"});
}

void write_minute_csv(std::ostream& out, const VisitBlock& block) {
    csv::Writer w(out);
    const std::string visit(to_string(block.visit));
    for (const auto& day : block.days) {
        for (int m = 0; m < kWindowMinutes; ++m) {
            const auto& c = day.counts[m];
            w.field(std::string_view(block.participant_id))
                .field(std::string_view(visit))
                .field(day.day_index)
                .field(m + kWindowStartMinute)
                .field(c.vertical)
                .field(c.horizontal)
                .field(c.perpendicular)
                .field(static_cast<int>(day.wear[m]));
            w.end_row();
        }
    }
}

} // namespace dpa::prep
