#pragma once

#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpa/assoc.hpp"

namespace dpa::testing {

// Table with response "pf", "period" and the given predictor columns; row i
// belongs to participant group[i].
inline assoc::FeatureTable make_table(const std::vector<int>& group, const std::vector<int>& period,
                                      const Eigen::VectorXd& y, const std::vector<std::string>& names,
                                      const Eigen::MatrixXd& x) {
    assoc::FeatureTable t;
    t.names = {"pf", "period"};
    t.names.insert(t.names.end(), names.begin(), names.end());
    t.values.resize(y.size(), static_cast<Eigen::Index>(t.names.size()));
    t.values.col(0) = y;
    for (Eigen::Index i = 0; i < y.size(); ++i) t.values(i, 1) = period[static_cast<std::size_t>(i)];
    if (x.cols()) t.values.rightCols(x.cols()) = x;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        t.participant_ids.push_back("p" + std::to_string(group[static_cast<std::size_t>(i)]));
        t.periods.push_back(period[static_cast<std::size_t>(i)]);
    }
    return t;
}

struct Simulated {
    std::vector<int> group;
    std::vector<int> period;
    Eigen::MatrixXd x;  // n x p predictors (no intercept)
    Eigen::VectorXd y;
};

// y = x beta + u_g + e with u ~ N(0, tau2), e ~ N(0, sigma2), obs_per
// observations per group.
inline Simulated simulate_lmm(std::mt19937_64& rng, int groups, int obs_per, const Eigen::VectorXd& beta,
                              double tau2, double sigma2, double intercept = 0.0) {
    std::normal_distribution<double> n01;
    Simulated s;
    const Eigen::Index n = groups * obs_per;
    s.x.resize(n, beta.size());
    s.y.resize(n);
    for (int g = 0; g < groups; ++g) {
        const double u = std::sqrt(tau2) * n01(rng);
        for (int k = 0; k < obs_per; ++k) {
            const Eigen::Index i = g * obs_per + k;
            s.group.push_back(g);
            s.period.push_back(k);
            for (Eigen::Index j = 0; j < beta.size(); ++j) s.x(i, j) = n01(rng);
            s.y[i] = intercept + s.x.row(i).dot(beta) + u + std::sqrt(sigma2) * n01(rng);
        }
    }
    return s;
}

inline std::vector<std::string> x_names(Eigen::Index p) {
    std::vector<std::string> out;
    for (Eigen::Index j = 1; j <= p; ++j) out.push_back("x" + std::to_string(j));
    return out;
}

inline assoc::Formula x_formula(Eigen::Index p) {
    std::string f = "pf ~ ";
    for (Eigen::Index j = 1; j <= p; ++j) f += (j > 1 ? " + x" : "x") + std::to_string(j);
    return assoc::Formula::parse(p ? f : "pf ~ 1");
}

// Dense generalized least squares with V = I + theta J per group.
inline Eigen::VectorXd gls_oracle(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<int>& group,
                                  double theta) {
    const Eigen::Index n = y.size();
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (group[static_cast<std::size_t>(i)] == group[static_cast<std::size_t>(j)]) v(i, j) += theta;
    const Eigen::MatrixXd vi = v.inverse();
    return (x.transpose() * vi * x).ldlt().solve(x.transpose() * vi * y);
}

inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out(x.rows(), x.cols() + 1);
    out << Eigen::VectorXd::Ones(x.rows()), x;
    return out;
}

} // namespace dpa::testing
