#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpa/prep.hpp"

namespace dpa::testing {

// A full-wear day with the same vector magnitude at every minute.
inline prep::DayRecord constant_day(int index, double vm) {
    prep::DayRecord d = prep::DayRecord::empty(index);
    for (int m = 0; m < prep::kWindowMinutes; ++m) {
        d.counts[m] = {vm, 0.0, 0.0};
        d.wear[m] = 1;
    }
    return d;
}

// A day whose first `nonwear` minutes are flagged non-wear.
inline prep::DayRecord day_with_nonwear(int index, int nonwear) {
    prep::DayRecord d = constant_day(index, 100.0);
    for (int m = 0; m < nonwear; ++m) {
        d.wear[m] = 0;
        d.counts[m] = {};
    }
    return d;
}

inline prep::DiurnalCurve curve_on(const Eigen::VectorXd& grid, const Eigen::VectorXd& values,
                                   prep::CurveStage stage = prep::CurveStage::Scaled,
                                   const std::string& id = "p") {
    prep::DiurnalCurve c;
    c.participant_id = id;
    c.grid = grid;
    c.values = values;
    c.stage = stage;
    return c;
}

inline prep::DiurnalCurve constant_curve(double v, const std::string& id = "p") {
    const Eigen::VectorXd g = prep::scaled_grid();
    return curve_on(g, Eigen::VectorXd::Constant(g.size(), v), prep::CurveStage::Scaled, id);
}

// Dense smoother matrix (I + lambda Q R^-1 Q^T)^-1 of the cubic smoothing
// spline, assembled directly from its textbook definition.
inline Eigen::MatrixXd dense_smoother(const Eigen::VectorXd& t, double lambda) {
    const Eigen::Index n = t.size();
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n - 2);
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n - 2, n - 2);
    for (Eigen::Index j = 1; j + 1 < n; ++j) {
        const double h0 = t[j] - t[j - 1];
        const double h1 = t[j + 1] - t[j];
        q(j - 1, j - 1) = 1.0 / h0;
        q(j, j - 1) = -1.0 / h0 - 1.0 / h1;
        q(j + 1, j - 1) = 1.0 / h1;
        r(j - 1, j - 1) = (h0 + h1) / 3.0;
        if (j + 1 < n - 1) {
            r(j - 1, j) = h1 / 6.0;
            r(j, j - 1) = h1 / 6.0;
        }
    }
    const Eigen::MatrixXd k = q * r.ldlt().solve(q.transpose());
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) + lambda * k;
    return a.ldlt().solve(Eigen::MatrixXd::Identity(n, n));
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

} // namespace dpa::testing
