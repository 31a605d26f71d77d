#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dpa/fpca.hpp"

namespace dpa::assoc {

// ---------------------------------------------------------------------------
// Feature table
// ---------------------------------------------------------------------------

struct EnergyRow {
    std::string participant_id;
    int period = 0;
    double energy = 0.0;
};

struct AucRow {
    std::string participant_id;
    int period = 0;
    double delta_net_auc = 0.0;
};

struct OutcomeRow {
    std::string participant_id;
    int period = 0;
    double pf = 0.0;           // NaN when missing
    double baseline_pf = 0.0;  // NaN when missing
};

// Participant-level covariates. Categorical columns are expanded into one
// indicator per non-reference level, named "column[level]".
struct Covariate {
    std::string name;
    bool categorical = false;
    std::string reference;  // categorical only
    std::map<std::string, double> numeric;      // participant -> value (NaN = missing)
    std::map<std::string, std::string> levels;  // participant -> level ("" = missing)
};

struct CollinearityFlag {
    int period = 0;
    std::string a;
    std::string b;
    double r = 0.0;
};

struct FeatureTable {
    std::vector<std::string> participant_ids;  // one entry per row
    std::vector<int> periods;
    std::vector<std::string> names;  // column names of `values`
    Eigen::MatrixXd values;          // rows x columns, complete cases only
    int n_pcs = 0;
    std::vector<std::string> covariate_columns;
    std::size_t joined_rows = 0;      // rows after the inner join
    std::size_t incomplete_rows = 0;  // dropped for a missing value
    std::vector<CollinearityFlag> collinear;

    std::size_t rows() const { return participant_ids.size(); }
    bool has(const std::string& name) const;
    Eigen::VectorXd column(const std::string& name) const;
    /// Row subset in the given order.
    FeatureTable subset(const std::vector<std::size_t>& rows) const;
    /// True when the pair (by column name) was flagged in any period.
    bool flagged(const std::string& a, const std::string& b) const;
};

inline constexpr double kCollinearityThreshold = 0.8;

/// Inner join of all sources on (participant, period), complete cases only.
/// L is the smallest component count retained in any period.
/// Columns: pf, baseline_pf, pc1..pcL, delta_net_auc, energy, period and the
/// expanded covariates. Throws InvalidInputError on duplicate keys or when no
/// complete case remains.
FeatureTable assemble_features(const std::vector<fpca::ScoreRow>& scores,
                               const std::vector<EnergyRow>& energies, const std::vector<AucRow>& aucs,
                               const std::vector<Covariate>& covariates,
                               const std::vector<OutcomeRow>& outcomes);

void write_features_csv(std::ostream& out, const FeatureTable& table);
FeatureTable read_features_csv(std::istream& in, const std::string& source = "<features>");

// ---------------------------------------------------------------------------
// Linear mixed model with a participant random intercept
// ---------------------------------------------------------------------------

// A fixed-effect term is a product of one or more table columns.
struct Term {
    std::vector<std::string> factors;
    std::string name() const;  // factors joined by ':'
};

struct Formula {
    std::string response = "pf";
    bool intercept = true;
    std::vector<Term> terms;

    /// "pf ~ pc1 + energy + period + energy:period"; "- 1" or "+ 0" drops the
    /// intercept.
    static Formula parse(const std::string& text);
    std::string str() const;
    std::vector<std::string> coefficient_names() const;
    bool contains(const std::string& term_name) const;
    Formula without(const std::string& term_name) const;
};

struct Coefficient {
    std::string name;
    double estimate = 0.0;
    double se = 0.0;
    double t = 0.0;
    double p = 1.0;
};

struct LmmFit {
    Formula formula;
    std::vector<Coefficient> fixed_effects;
    double var_random = 0.0;  // tau^2
    double var_resid = 0.0;   // sigma^2
    double theta = 0.0;       // tau^2 / sigma^2
    double loglik = 0.0;
    double bic = 0.0;
    bool reml = false;
    bool boundary = false;  // tau^2 estimated at 0
    std::size_t n_obs = 0;
    std::size_t n_groups = 0;
    std::uint64_t rows_signature = 0;  // identifies the rows and response used

    std::size_t n_fixed() const { return fixed_effects.size(); }
    const Coefficient& coef(const std::string& name) const;
    Eigen::VectorXd beta() const;
};

struct LmmOptions {
    bool reml = false;
    double log_theta_lo = -12.0;
    double log_theta_hi = 12.0;
    double tol = 1e-10;  // golden-section bracket width on log theta
};

LmmFit fit_lmm(const FeatureTable& table, const Formula& formula, const LmmOptions& options = {});

/// Profiles beta and sigma^2 at a fixed variance ratio theta = tau^2/sigma^2.
LmmFit fit_lmm_fixed_theta(const FeatureTable& table, const Formula& formula, double theta,
                           bool reml = false);

struct LrtResult {
    std::string tested;
    double statistic = 0.0;
    int df = 0;
    double p = 1.0;
};

/// Likelihood-ratio test of nested ML fits on the same rows.
LrtResult lrt(const LmmFit& full, const LmmFit& reduced);

/// Chi-square upper tail probability.
double chi2_sf(double x, int df);

// ---------------------------------------------------------------------------
// L1 selection
// ---------------------------------------------------------------------------

struct LassoStep {
    double lambda = 0.0;
    std::vector<double> coefficients;  // original scale, formula order
    int nonzero = 0;
    double loglik = 0.0;          // at the penalized coefficients
    double support_loglik = 0.0;  // unpenalized least squares on the nonzero support
    double bic = 0.0;             // from support_loglik
};

struct LassoResult {
    std::vector<std::string> names;
    std::vector<LassoStep> path;
    std::size_t chosen = 0;
    std::vector<std::string> selected;  // terms with a nonzero coefficient at the chosen lambda
    LmmFit refit;
    double theta = 0.0;
    double var_resid = 0.0;
};

struct LassoOptions {
    // Terms that are never penalized (the intercept never is).
    std::vector<std::string> unpenalized{"period", "energy", "energy:period", "baseline_pf"};
    int max_sweeps = 100000;
    double tol = 1e-10;
};

LassoResult lasso_lmm(const FeatureTable& table, const Formula& formula,
                      const std::vector<double>& lambda_grid, const LassoOptions& options = {});

/// Decreasing log-spaced grid from the smallest lambda that zeroes every
/// penalized coefficient down to ratio times that value.
std::vector<double> default_lambda_grid(const FeatureTable& table, const Formula& formula,
                                        int size = 50, double ratio = 1e-3,
                                        const LassoOptions& options = {});

// ---------------------------------------------------------------------------
// The two association models
// ---------------------------------------------------------------------------

struct ModelsOptions {
    int max_pcs = 4;
    double alpha = 0.025;
    bool reml_report = false;
    std::vector<std::string> covariates;  // table columns; empty = all covariate columns
};

struct ModelReport {
    std::string label;
    LmmFit full;
    LmmFit reduced;  // without energy:period
    LrtResult interaction;
    bool significant = false;
};

struct ModelsReport {
    ModelReport model1;  // PC scores
    ModelReport model2;  // delta net-AUC
    double alpha = 0.025;
    std::size_t n_obs = 0;
    std::vector<CollinearityFlag> collinear;
    std::optional<LassoResult> selection;  // L1 path over the Model 1 terms, when run
};

Formula model1_formula(const FeatureTable& table, const ModelsOptions& options = {});
Formula model2_formula(const FeatureTable& table, const ModelsOptions& options = {});

ModelsReport run_models(const FeatureTable& table, const ModelsOptions& options = {});

void write_report_json(std::ostream& out, const ModelsReport& report);
void write_report_text(std::ostream& out, const ModelsReport& report);
void write_lasso_json(std::ostream& out, const LassoResult& result);

} // namespace dpa::assoc
