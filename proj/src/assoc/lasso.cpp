#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "design.hpp"
#include "dpa/assoc.hpp"
#include "dpa/errors.hpp"

namespace dpa::assoc {

namespace {

// Penalized problem with the variance components frozen at the ML fit:
// minimize 1/(2N) |y~ - Z b|^2 + lambda sum_{penalized} |b_j| on the
// prewhitened, scaled design. The unpenalized block is profiled out by
// projecting onto the orthogonal complement of its columns.
struct Problem {
    Design d;
    double theta = 0.0;
    double sigma2 = 0.0;
    double logdet = 0.0;  // log det V~
    std::vector<Eigen::Index> pen;  // penalized columns of d.x
    std::vector<Eigen::Index> unpen;
    Eigen::VectorXd scale;          // per penalized column
    Eigen::MatrixXd zu;             // whitened unpenalized columns
    Eigen::MatrixXd zp;             // whitened, scaled, residualized penalized columns
    Eigen::MatrixXd zp_raw;         // whitened, scaled penalized columns
    Eigen::VectorXd yw;             // whitened response
    Eigen::VectorXd y_res;          // whitened response, residualized
    Eigen::MatrixXd gram;           // zp' zp / N
    Eigen::VectorXd corr;           // zp' y_res / N
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_u;
};

Eigen::MatrixXd whiten(const Design& d, const Eigen::MatrixXd& m, double theta) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(d.n_groups, m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) sums.row(d.group[static_cast<std::size_t>(i)]) += m.row(i);
    Eigen::VectorXd f(d.n_groups);
    for (int g = 0; g < d.n_groups; ++g) {
        const double ng = d.group_size[static_cast<std::size_t>(g)];
        f[g] = (1.0 - 1.0 / std::sqrt(1.0 + ng * theta)) / ng;
    }
    Eigen::MatrixXd out = m;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const int g = d.group[static_cast<std::size_t>(i)];
        out.row(i) -= f[g] * sums.row(g);
    }
    return out;
}

Problem setup(const FeatureTable& table, const Formula& formula, const LassoOptions& options) {
    Problem pb;
    const LmmFit ml = fit_lmm(table, formula);
    pb.theta = ml.theta;
    pb.sigma2 = ml.var_resid;
    pb.d = build_design(table, formula);
    const Design& d = pb.d;
    const double n = static_cast<double>(d.x.rows());
    for (int g = 0; g < d.n_groups; ++g) pb.logdet += std::log1p(d.group_size[static_cast<std::size_t>(g)] * pb.theta);

    for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
        const auto& name = d.names[static_cast<std::size_t>(j)];
        const bool free = name == kInterceptName ||
                          std::find(options.unpenalized.begin(), options.unpenalized.end(), name) !=
                              options.unpenalized.end();
        (free ? pb.unpen : pb.pen).push_back(j);
    }
    const Eigen::MatrixXd xw = whiten(d, d.x, pb.theta);
    pb.yw = whiten(d, d.y, pb.theta).col(0);

    pb.zu.resize(xw.rows(), static_cast<Eigen::Index>(pb.unpen.size()));
    for (std::size_t k = 0; k < pb.unpen.size(); ++k) pb.zu.col(static_cast<Eigen::Index>(k)) = xw.col(pb.unpen[k]);
    pb.zp_raw.resize(xw.rows(), static_cast<Eigen::Index>(pb.pen.size()));
    pb.scale.resize(static_cast<Eigen::Index>(pb.pen.size()));
    for (std::size_t k = 0; k < pb.pen.size(); ++k) {
        const Eigen::VectorXd c = xw.col(pb.pen[k]);
        const double sd = std::sqrt((c.array() - c.mean()).square().sum() / (n - 1.0));
        if (!(sd > 0.0))
            throw InvalidInputError("lasso_lmm: penalized column '" + d.names[static_cast<std::size_t>(pb.pen[k])] +
                                    "' has zero variance");
        pb.scale[static_cast<Eigen::Index>(k)] = sd;
        pb.zp_raw.col(static_cast<Eigen::Index>(k)) = c / sd;
    }

    pb.zp = pb.zp_raw;
    pb.y_res = pb.yw;
    if (pb.zu.cols() > 0) {
        pb.qr_u.compute(pb.zu);
        pb.zp -= pb.zu * pb.qr_u.solve(pb.zp_raw);
        pb.y_res -= pb.zu * pb.qr_u.solve(pb.yw);
    }
    pb.gram = pb.zp.transpose() * pb.zp / n;
    pb.corr = pb.zp.transpose() * pb.y_res / n;
    return pb;
}

double soft(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

// Cyclic coordinate descent on the residualized problem with warm start b.
void descend(const Problem& pb, double lambda, Eigen::VectorXd& b, const LassoOptions& options) {
    const Eigen::Index m = b.size();
    Eigen::VectorXd grad = pb.corr - pb.gram * b;  // zp'(y - zp b)/N
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
        double delta = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            const double gjj = pb.gram(j, j);
            if (gjj <= 1e-14) {
                b[j] = 0.0;
                continue;
            }
            const double old = b[j];
            const double nb = soft(grad[j] + gjj * old, lambda) / gjj;
            if (nb != old) {
                grad -= pb.gram.col(j) * (nb - old);
                b[j] = nb;
                delta = std::max(delta, std::abs(nb - old) * std::sqrt(gjj));
            }
        }
        if (delta < options.tol) return;
    }
    throw NumericError("lasso_lmm: coordinate descent did not converge at lambda " + std::to_string(lambda));
}

} // namespace

std::vector<double> default_lambda_grid(const FeatureTable& table, const Formula& formula, int size,
                                        double ratio, const LassoOptions& options) {
    if (size < 1) throw InvalidInputError("default_lambda_grid: size must be >= 1");
    if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidInputError("default_lambda_grid: ratio must lie in (0, 1)");
    const Problem pb = setup(table, formula, options);
    const double top = pb.corr.size() ? pb.corr.cwiseAbs().maxCoeff() : 0.0;
    if (!(top > 0.0)) return {0.0};
    std::vector<double> grid;
    for (int k = 0; k < size; ++k)
        grid.push_back(top * std::pow(ratio, size == 1 ? 0.0 : static_cast<double>(k) / (size - 1)));
    return grid;
}

LassoResult lasso_lmm(const FeatureTable& table, const Formula& formula, const std::vector<double>& lambda_grid,
                      const LassoOptions& options) {
    if (lambda_grid.empty()) throw InvalidInputError("lasso_lmm: empty lambda grid");
    for (std::size_t k = 0; k < lambda_grid.size(); ++k) {
        if (!(lambda_grid[k] >= 0.0) || !std::isfinite(lambda_grid[k]))
            throw InvalidInputError("lasso_lmm: lambda values must be finite and >= 0");
        if (k > 0 && !(lambda_grid[k] < lambda_grid[k - 1]))
            throw InvalidInputError("lasso_lmm: lambda grid must be strictly decreasing");
    }
    const Problem pb = setup(table, formula, options);
    const Design& d = pb.d;
    const double n = static_cast<double>(d.x.rows());
    const double log_n = std::log(n);

    LassoResult res;
    res.names = d.names;
    res.theta = pb.theta;
    res.var_resid = pb.sigma2;

    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pb.pen.size()));
    for (double lambda : lambda_grid) {
        descend(pb, lambda, b, options);
        // Recover the unpenalized block, then undo the scaling.
        Eigen::VectorXd bu(pb.zu.cols());
        if (pb.zu.cols() > 0) bu = pb.qr_u.solve(pb.yw - pb.zp_raw * b);
        const Eigen::VectorXd fitted = pb.zu * bu + pb.zp_raw * b;
        const double rss = (pb.yw - fitted).squaredNorm();

        LassoStep step;
        step.lambda = lambda;
        step.coefficients.assign(d.names.size(), 0.0);
        for (std::size_t k = 0; k < pb.unpen.size(); ++k)
            step.coefficients[static_cast<std::size_t>(pb.unpen[k])] = bu[static_cast<Eigen::Index>(k)];
        for (std::size_t k = 0; k < pb.pen.size(); ++k)
            step.coefficients[static_cast<std::size_t>(pb.pen[k])] =
                b[static_cast<Eigen::Index>(k)] / pb.scale[static_cast<Eigen::Index>(k)];
        step.nonzero = static_cast<int>(
            std::count_if(step.coefficients.begin(), step.coefficients.end(), [](double v) { return v != 0.0; }));
        step.loglik = -0.5 * (n * std::log(2.0 * std::numbers::pi * pb.sigma2) + pb.logdet + rss / pb.sigma2);
        // BIC scores the support: least squares on the active whitened
        // columns, variance components still frozen.
        Eigen::MatrixXd active(pb.yw.size(), pb.zu.cols() + pb.zp_raw.cols());
        Eigen::Index col = 0;
        for (std::size_t k = 0; k < pb.unpen.size(); ++k) active.col(col++) = pb.zu.col(static_cast<Eigen::Index>(k));
        for (std::size_t k = 0; k < pb.pen.size(); ++k)
            if (b[static_cast<Eigen::Index>(k)] != 0.0) active.col(col++) = pb.zp_raw.col(static_cast<Eigen::Index>(k));
        active.conservativeResize(Eigen::NoChange, col);
        const double rss_support =
            col ? (pb.yw - active * active.colPivHouseholderQr().solve(pb.yw)).squaredNorm() : pb.yw.squaredNorm();
        step.support_loglik =
            -0.5 * (n * std::log(2.0 * std::numbers::pi * pb.sigma2) + pb.logdet + rss_support / pb.sigma2);
        step.bic = -2.0 * step.support_loglik + (step.nonzero + 2) * log_n;
        res.path.push_back(std::move(step));
    }

    // Ties resolve to the larger lambda, i.e. the earlier grid entry.
    for (std::size_t k = 1; k < res.path.size(); ++k)
        if (res.path[k].bic < res.path[res.chosen].bic) res.chosen = k;

    Formula reduced = formula;
    reduced.terms.clear();
    const auto& chosen = res.path[res.chosen].coefficients;
    for (const auto& t : formula.terms) {
        const auto it = std::find(d.names.begin(), d.names.end(), t.name());
        const bool keep = chosen[static_cast<std::size_t>(it - d.names.begin())] != 0.0 ||
                          std::find(options.unpenalized.begin(), options.unpenalized.end(), t.name()) !=
                              options.unpenalized.end();
        if (keep) {
            reduced.terms.push_back(t);
            res.selected.push_back(t.name());
        }
    }
    res.refit = fit_lmm(table, reduced);
    return res;
}

} // namespace dpa::assoc
