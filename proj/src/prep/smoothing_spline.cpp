#include "dpa/smoothing_spline.hpp"

#include <cmath>
#include <sstream>

#include "dpa/errors.hpp"

namespace dpa::prep {

// Pentadiagonal SPD matrix R + lambda Q^T Q with its LDL^T factors.
struct SmoothingSpline::Banded {
    Eigen::VectorXd d;   // D
    Eigen::VectorXd l1;  // L(i+1, i)
    Eigen::VectorXd l2;  // L(i+2, i)

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
        const Eigen::Index m = d.size();
        Eigen::VectorXd z = rhs;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (i >= 1) z[i] -= l1[i - 1] * z[i - 1];
            if (i >= 2) z[i] -= l2[i - 2] * z[i - 2];
        }
        for (Eigen::Index i = 0; i < m; ++i) z[i] /= d[i];
        for (Eigen::Index i = m - 1; i >= 0; --i) {
            if (i + 1 < m) z[i] -= l1[i] * z[i + 1];
            if (i + 2 < m) z[i] -= l2[i] * z[i + 2];
        }
        return z;
    }
};

SmoothingSpline::SmoothingSpline(Eigen::VectorXd grid) : grid_(std::move(grid)) {
    const Eigen::Index n = grid_.size();
    if (n < 4) throw InvalidInputError("smoothing spline needs at least 4 grid points");
    h_ = grid_.tail(n - 1) - grid_.head(n - 1);
    if ((h_.array() <= 0.0).any())
        throw InvalidInputError("smoothing spline grid must be strictly increasing");

    const Eigen::Index m = n - 2;
    q_lo_.resize(m);
    q_mid_.resize(m);
    q_hi_.resize(m);
    r_diag_.resize(m);
    r_off_ = Eigen::VectorXd::Zero(std::max<Eigen::Index>(m - 1, 0));
    for (Eigen::Index j = 0; j < m; ++j) {
        q_lo_[j] = 1.0 / h_[j];
        q_hi_[j] = 1.0 / h_[j + 1];
        q_mid_[j] = -q_lo_[j] - q_hi_[j];
        r_diag_[j] = (h_[j] + h_[j + 1]) / 3.0;
        if (j + 1 < m) r_off_[j] = h_[j + 1] / 6.0;
    }

    m0_.resize(m);
    m1_ = Eigen::VectorXd::Zero(std::max<Eigen::Index>(m - 1, 0));
    m2_ = Eigen::VectorXd::Zero(std::max<Eigen::Index>(m - 2, 0));
    for (Eigen::Index j = 0; j < m; ++j) {
        m0_[j] = q_lo_[j] * q_lo_[j] + q_mid_[j] * q_mid_[j] + q_hi_[j] * q_hi_[j];
        if (j + 1 < m) m1_[j] = q_mid_[j] * q_lo_[j + 1] + q_hi_[j] * q_mid_[j + 1];
        if (j + 2 < m) m2_[j] = q_hi_[j] * q_lo_[j + 2];
    }
}

SmoothingSpline::Banded SmoothingSpline::system(double lambda) const {
    const Eigen::Index m = r_diag_.size();
    Banded b;
    b.d.resize(m);
    b.l1 = Eigen::VectorXd::Zero(m);
    b.l2 = Eigen::VectorXd::Zero(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double b0 = r_diag_[i] + lambda * m0_[i];
        const double b1 = (i + 1 < m) ? r_off_[i] + lambda * m1_[i] : 0.0;
        const double b2 = (i + 2 < m) ? lambda * m2_[i] : 0.0;

        double di = b0;
        if (i >= 1) di -= b.l1[i - 1] * b.l1[i - 1] * b.d[i - 1];
        if (i >= 2) di -= b.l2[i - 2] * b.l2[i - 2] * b.d[i - 2];
        if (!(di > 0.0)) {
            throw NumericError("smoothing spline system lost positive definiteness at lambda=" +
                               std::to_string(lambda));
        }
        b.d[i] = di;

        double l1 = b1;
        if (i >= 1) l1 -= b.l2[i - 1] * b.l1[i - 1] * b.d[i - 1];
        b.l1[i] = l1 / di;
        b.l2[i] = b2 / di;
    }
    return b;
}

Eigen::VectorXd SmoothingSpline::smooth(const Eigen::VectorXd& y, double lambda) const {
    const Eigen::Index n = grid_.size();
    if (y.size() != n) throw InvalidInputError("smoothing spline: value count does not match grid");
    if (!y.allFinite()) throw InvalidInputError("smoothing spline: non-finite input value");
    if (!(lambda >= 0.0)) throw InvalidInputError("smoothing spline: lambda must be >= 0");

    const Eigen::Index m = n - 2;
    Eigen::VectorXd qty(m);
    for (Eigen::Index j = 0; j < m; ++j)
        qty[j] = q_lo_[j] * y[j] + q_mid_[j] * y[j + 1] + q_hi_[j] * y[j + 2];

    const Eigen::VectorXd gamma = system(lambda).solve(qty);

    Eigen::VectorXd g = y;
    for (Eigen::Index j = 0; j < m; ++j) {
        g[j] -= lambda * q_lo_[j] * gamma[j];
        g[j + 1] -= lambda * q_mid_[j] * gamma[j];
        g[j + 2] -= lambda * q_hi_[j] * gamma[j];
    }
    return g;
}

double SmoothingSpline::degrees_of_freedom(double lambda) const {
    const Eigen::Index n = grid_.size();
    const Eigen::Index m = n - 2;
    const Banded b = system(lambda);

    // Band (width 2) of the inverse, from the LDL^T factors.
    Eigen::VectorXd s0 = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd s2 = Eigen::VectorXd::Zero(m);
    for (Eigen::Index i = m - 1; i >= 0; --i) {
        const double a1 = (i + 1 < m) ? b.l1[i] : 0.0;
        const double a2 = (i + 2 < m) ? b.l2[i] : 0.0;
        const double s11 = (i + 1 < m) ? s0[i + 1] : 0.0;
        const double s12 = (i + 1 < m) ? s1[i + 1] : 0.0;  // Sigma(i+1, i+2)
        const double s22 = (i + 2 < m) ? s0[i + 2] : 0.0;
        s1[i] = -a1 * s11 - a2 * s12;
        s2[i] = -a1 * s12 - a2 * s22;
        s0[i] = 1.0 / b.d[i] - a1 * s1[i] - a2 * s2[i];
    }

    double tr = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        tr += s0[i] * m0_[i];
        if (i + 1 < m) tr += 2.0 * s1[i] * m1_[i];
        if (i + 2 < m) tr += 2.0 * s2[i] * m2_[i];
    }
    return static_cast<double>(n) - lambda * tr;
}

double SmoothingSpline::lambda_for_df(double target_df, double tol, double log_lo,
                                      double log_hi) const {
    const double df_lo = degrees_of_freedom(std::exp(log_lo));  // least smoothing
    const double df_hi = degrees_of_freedom(std::exp(log_hi));
    if (!(target_df <= df_lo + tol && target_df >= df_hi - tol)) {
        std::ostringstream msg;
        msg << "smoothing spline: target df " << target_df << " not attainable; bracket log(lambda) in ["
            << log_lo << ", " << log_hi << "] gives df in [" << df_hi << ", " << df_lo << "]";
        throw NumericError(msg.str());
    }

    double lo = log_lo;
    double hi = log_hi;
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double df = degrees_of_freedom(std::exp(mid));
        if (std::abs(df - target_df) <= tol) return std::exp(mid);
        // df decreases in lambda
        if (df > target_df)
            lo = mid;
        else
            hi = mid;
    }
    std::ostringstream msg;
    msg << "smoothing spline: bisection did not reach df " << target_df << " within " << tol
        << "; final bracket log(lambda) in [" << lo << ", " << hi << "]";
    throw NumericError(msg.str());
}

} // namespace dpa::prep
