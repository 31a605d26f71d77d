#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dpa/geodesics.hpp"

namespace dpa::fpca {

enum class Domain { X, Y, Concatenated };

std::string_view to_string(Domain d);

/// Trapezoid weights on an increasing grid.
Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& grid);

struct FunctionalSample {
    Eigen::VectorXd grid;
    Eigen::VectorXd quad_weights;
    Eigen::MatrixXd data;  // n x P, one function per row
    Domain domain = Domain::X;
    std::vector<std::string> participant_ids;  // optional, n entries when set

    // Throws InvalidInputError on shape mismatch, n < 2, a non-increasing
    // grid or weights that are not the trapezoid weights of the grid.
    void validate() const;
};

FunctionalSample make_sample(const Eigen::VectorXd& grid, const Eigen::MatrixXd& data, Domain domain,
                             std::vector<std::string> participant_ids = {});

/// Smallest l with sum(ev[0..l)) / sum(ev) >= target. Exact ties resolve to
/// the smaller count; an all-zero spectrum gives 0.
Eigen::Index select_components(const Eigen::VectorXd& eigenvalues, double target);

/// Cumulative fractions of the total of `eigenvalues`, first n entries.
Eigen::VectorXd cumulative_pve(const Eigen::VectorXd& eigenvalues, Eigen::Index n);

struct FpcaModel {
    Domain domain = Domain::X;
    Eigen::VectorXd grid;
    Eigen::VectorXd quad_weights;
    Eigen::VectorXd mean;
    Eigen::MatrixXd eigenfunctions;  // K x P
    Eigen::VectorXd eigenvalues;     // K, non-increasing
    Eigen::MatrixXd scores;          // n x K
    Eigen::VectorXd pve;             // K cumulative fractions
    Eigen::VectorXd spectrum;        // every eigenvalue after clipping at 0
    std::vector<std::string> participant_ids;
    double pve_target = 0.99;
    // Concatenated models: the first split_index grid points are the x domain.
    Eigen::Index split_index = 0;

    Eigen::Index components() const { return eigenvalues.size(); }
    Eigen::Index samples() const { return scores.rows(); }
    double total_variance() const { return spectrum.sum(); }

    /// Columns of one domain of a concatenated model (K x P_d).
    Eigen::MatrixXd domain_slice(Domain d) const;
};

/// Quadrature-weighted functional PCA without smoothing.
FpcaModel ufpca(const FunctionalSample& sample, double pve_target = 0.99);

/// Joins each subject's x and y functions (y after x, each keeping its own
/// weights) and runs ufpca on the result.
FpcaModel concat_ufpca(const FunctionalSample& x, const FunctionalSample& y, double pve_target = 0.99);

struct MfpcaModel {
    Eigen::MatrixXd weights;          // K x L, rows 0..kx-1 belong to x
    Eigen::MatrixXd full_weights;     // K x K
    Eigen::VectorXd eigenvalues;      // L retained
    Eigen::VectorXd spectrum;         // all K eigenvalues of Z
    Eigen::MatrixXd eigenfunctions_x; // L x P_x
    Eigen::MatrixXd eigenfunctions_y; // L x P_y
    Eigen::MatrixXd scores;           // n x L
    Eigen::VectorXd pve;              // L cumulative fractions
    Eigen::MatrixXd z;                // K x K stacked score covariance
    Eigen::Index kx = 0;
    Eigen::Index ky = 0;
    double pve_target = 0.9;
    std::vector<std::string> participant_ids;

    Eigen::Index retained() const { return eigenvalues.size(); }
};

/// Multivariate FPCA from two univariate fits on the same subjects.
MfpcaModel mfpca(const FpcaModel& model_x, const FpcaModel& model_y, double pve_target = 0.90);

/// Mean momenta plus scale times mode l (1-based) at the control points.
geo::MomentaField pc_deformation(const MfpcaModel& model, const geo::MomentaField& mean_field,
                                 Eigen::Index l, double scale);
/// Same with scale = sqrt(nu_l).
geo::MomentaField pc_deformation(const MfpcaModel& model, const geo::MomentaField& mean_field,
                                 Eigen::Index l);

/// mean + sum_{k<=m} score_ik phi_k
Eigen::VectorXd reconstruct(const FpcaModel& model, Eigen::Index i, Eigen::Index m);

/// Per-domain reconstruction from the first m multivariate components.
std::pair<Eigen::VectorXd, Eigen::VectorXd> reconstruct(const MfpcaModel& model,
                                                        const FpcaModel& model_x,
                                                        const FpcaModel& model_y, Eigen::Index i,
                                                        Eigen::Index m);

// ---------------------------------------------------------------------------
// MFPCA against concatenated UFPCA
// ---------------------------------------------------------------------------

struct ConcatComparison {
    Eigen::Index component = 1;
    // |cos| between the mfpca eigenfunction and the concatenated one, per domain.
    double cosine_x = 0.0;
    double cosine_y = 0.0;
    // Cross-domain covariance each model assigns to (x at its last grid point,
    // y at its first): sum_k lambda_k phi_k^x(end) phi_k^y(0) over retained components.
    double boundary_concat = 0.0;
    double boundary_mfpca = 0.0;
};

ConcatComparison compare_concat(const MfpcaModel& model, const FpcaModel& concat, Eigen::Index component = 1);

// ---------------------------------------------------------------------------
// Per-period fits over momenta fields
// ---------------------------------------------------------------------------

struct PeriodFpca {
    int period = 0;
    FpcaModel x;
    FpcaModel y;
    MfpcaModel mfpca;
    geo::MomentaField mean_field;  // mean control points and mean momenta
};

/// Builds the x- and y-momentum samples of one period. All fields must share
/// the control-point abscissae.
std::pair<FunctionalSample, FunctionalSample> momenta_samples(
    const std::vector<geo::MomentaField>& fields);

PeriodFpca fit_period(const std::vector<geo::MomentaField>& fields, double univariate_pve = 0.99,
                      double multivariate_pve = 0.90);

// ---------------------------------------------------------------------------
// IO
// ---------------------------------------------------------------------------

void write_period_json(std::ostream& out, const PeriodFpca& fit);
PeriodFpca read_period_json(std::istream& in);

// Columns: participant_id,period,pc,score (pc is 1-based)
void write_scores_csv_header(std::ostream& out);
void write_scores_csv(std::ostream& out, const PeriodFpca& fit);

struct ScoreRow {
    std::string participant_id;
    int period = 0;
    int pc = 0;
    double score = 0.0;
};
std::vector<ScoreRow> read_scores_csv(std::istream& in, const std::string& source = "<scores>");

/// Columns: component, then one cumulative PVE column per period.
void write_pve_table(std::ostream& out, const std::vector<PeriodFpca>& fits);

} // namespace dpa::fpca
