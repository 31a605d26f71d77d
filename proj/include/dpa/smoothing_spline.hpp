#pragma once

#include <Eigen/Core>

namespace dpa::prep {

// Cubic smoothing spline on a fixed, strictly increasing grid, solved with the
// Reinsch banded formulation. The smoother matrix trace (effective degrees of
// freedom) depends only on the grid and the penalty, so one instance serves
// every curve sampled on the same grid.
class SmoothingSpline {
public:
    explicit SmoothingSpline(Eigen::VectorXd grid);

    Eigen::Index size() const { return grid_.size(); }
    const Eigen::VectorXd& grid() const { return grid_; }

    /// Fitted values at the grid for penalty lambda.
    Eigen::VectorXd smooth(const Eigen::VectorXd& y, double lambda) const;

    /// trace(S(lambda)), computed from the band of the inverse of the
    /// pentadiagonal system matrix.
    double degrees_of_freedom(double lambda) const;

    /// Bisection on log(lambda) over [log_lo, log_hi] until the trace is
    /// within `tol` of target_df. Throws NumericError if the target lies
    /// outside the bracket.
    double lambda_for_df(double target_df, double tol = 0.01, double log_lo = -20.0,
                         double log_hi = 20.0) const;

private:
    struct Banded;
    Banded system(double lambda) const;

    Eigen::VectorXd grid_;
    Eigen::VectorXd h_;
    // Q is n x (n-2) with three nonzeros per column; stored by column.
    Eigen::VectorXd q_lo_, q_mid_, q_hi_;
    // R is (n-2) x (n-2) tridiagonal.
    Eigen::VectorXd r_diag_, r_off_;
    // Q^T Q is pentadiagonal.
    Eigen::VectorXd m0_, m1_, m2_;
};

} // namespace dpa::prep
