#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpa/assoc.hpp"
#include "dpa/geodesics.hpp"
#include "dpa/prep.hpp"

namespace dpa::harness {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

// Baseline curves are a level plus Gaussian bumps on the minute grid.
struct BumpModel {
    int min_bumps = 3;
    int max_bumps = 5;
    double base_level = 150.0;     // counts/min
    double amplitude_mean = 600.0;
    double amplitude_sd = 150.0;
    double location_lo = 90.0;     // minute of the window
    double location_hi = 990.0;
    double width_lo = 60.0;        // bump SD in minutes
    double width_hi = 150.0;
};

// Momenta for one period, in scaled coordinates:
// p = (1 + s_i) drift + loading_i * mode + noise.
struct PeriodLaw {
    double drift_shift = 0.0;  // x momentum of the drift (temporal shift)
    double drift_lift = 0.0;   // y momentum of the drift (vertical shift)
    double drift_scale_sd = 0.2;
    double loading_sd = 1.0;
    double noise_sd = 0.0006;  // amplitude of the smooth momentum noise
    int noise_bumps = 4;
};

// The planted mode: a y-momentum bump plus an optional x component.
struct ModeLaw {
    double center = 0.1;  // scaled x
    double width = 0.3;
    double y_amplitude = 0.004;
    double x_amplitude = 0.0;
};

struct OutcomeLaw {
    double intercept = 60.0;
    double beta_loading = 3.0;        // per SD of the planted loading
    double beta_energy = -6.0;        // per SD of the planted energy
    double beta_period = -1.0;
    double beta_energy_period = 12.0;
    double beta_baseline = 0.5;       // on baseline_pf - baseline_mean
    double beta_age = -0.2;           // on age - 70
    double baseline_mean = 70.0;
    double baseline_sd = 15.0;
    double random_sd = 4.0;
    double noise_sd = 5.0;
};

struct Missingness {
    double outcome = 0.03;       // per participant-period
    double covariate = 0.01;     // per participant and covariate
    double wear_gap_day = 0.15;  // chance a day carries a non-wear block
    int gap_min = 60;            // block length in minutes
    int gap_max = 420;
};

struct SimConfig {
    int n_participants = 500;
    int visits = 3;
    int days_per_visit = 5;
    double minute_noise_cv = 0.3;  // multiplicative minute-level noise
    double day_sd = 0.1;           // log-scale day-to-day level variation
    BumpModel bumps;
    ModeLaw mode;
    std::array<PeriodLaw, 2> periods{PeriodLaw{0.003, 0.002, 0.2, 1.0, 0.0006, 4},
                                     PeriodLaw{0.0015, 0.001, 0.2, 1.0, 0.0006, 4}};
    OutcomeLaw outcome;
    Missingness missing;
    int control_stride = 10;
    double sigma_v = 0.2;
    int n_steps = 15;
    std::uint64_t seed = 20240611;

    /// Throws InvalidInputError on an unusable configuration.
    void validate() const;
};

struct TruthRow {
    std::string participant_id;
    int period = 0;
    double loading = 0.0;
    double energy = 0.0;    // sum of squared planted momenta
    double energy_z = 0.0;  // cohort-standardized
    double pf = 0.0;        // before missingness
};

struct SimTruth {
    SimConfig config;
    prep::ScalingParams scaling;  // used to move between counts and scaled coordinates
    geo::Points mode;             // on the stride grid
    std::array<geo::Points, 2> drift;
    std::vector<TruthRow> rows;
    std::vector<assoc::OutcomeRow> outcomes;
    std::vector<std::string> participant_ids;
    std::vector<double> age;        // NaN = missing
    std::vector<std::string> site;  // "" = missing
};

using BlockSink = std::function<void(const prep::VisitBlock&)>;

/// Generates the cohort. Blocks are delivered to `sink` ordered by
/// (participant, visit). The output depends on the seed only.
SimTruth simulate_cohort(const SimConfig& config, const BlockSink& sink, int workers = 1);

struct SimFiles {
    std::filesystem::path minutes;
    std::filesystem::path outcomes;
    std::filesystem::path covariates;
    std::filesystem::path truth;
    std::filesystem::path truth_rows;
};

/// Writes minutes.csv, outcomes.csv, covariates.csv, truth.json and truth.csv.
SimFiles simulate_to_dir(const SimConfig& config, const std::filesystem::path& dir, int workers = 1);

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct PipelineConfig {
    std::filesystem::path minutes;
    std::filesystem::path outcomes;
    std::filesystem::path covariates;  // optional
    std::map<std::string, std::string> categorical_reference;

    prep::ValidDayRules day_rules;
    double target_df = 25.0;
    geo::KernelConfig kernel;
    geo::MatchOptions match;
    double univariate_pve = 0.99;
    double multivariate_pve = 0.90;
    assoc::ModelsOptions models;
    bool lasso = true;
    int lasso_grid = 50;

    int workers = 0;
    std::filesystem::path out_dir = "out";
    std::filesystem::path cache_dir;  // $DIFFEO_PA_CACHE wins; empty means out_dir/cache

    /// Checks values and that the referenced inputs exist.
    void validate() const;
};

struct Config {
    std::optional<SimConfig> simulation;
    PipelineConfig pipeline;
};

/// JSON with optional "simulation" and "pipeline" objects. Relative input
/// paths resolve against the file's directory. Unknown keys are rejected.
Config load_config(const std::filesystem::path& path);
Config parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
std::string to_json(const SimConfig& config);
std::string to_json(const PipelineConfig& config);

enum class Stage { Prep = 0, Match, Mfpca, Features, Assoc, Plots };
inline constexpr int kStageCount = 6;
const char* stage_name(Stage s);

struct Artifact {
    std::string path;  // relative to the output directory
    std::string sha256;
};

struct StageRecord {
    std::string name;
    std::string key;     // content hash of the stage inputs and settings
    std::string status;  // "ran" or "cached"
    double seconds = 0.0;
    std::vector<Artifact> artifacts;
};

struct PipelineResult {
    std::filesystem::path out_dir;
    std::vector<StageRecord> stages;
};

// A failed stage. Artifacts of earlier stages stay on disk.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, std::vector<std::string> participants, const std::string& what,
               bool numeric);
    const std::string& stage() const { return stage_; }
    const std::vector<std::string>& participants() const { return participants_; }
    bool numeric() const { return numeric_; }

private:
    std::string stage_;
    std::vector<std::string> participants_;
    bool numeric_;
};

/// Runs the stages up to and including `last`. A stage whose key matches
/// the manifest in out_dir, with its artifacts intact, is not rerun.
PipelineResult run_pipeline(const PipelineConfig& config, Stage last = Stage::Plots);

/// Directory for cached matchings.
std::filesystem::path cache_directory(const PipelineConfig& config);

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

} // namespace dpa::harness
