#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "dpa/errors.hpp"
#include "dpa/fpca.hpp"
#include "dpa/log.hpp"
#include "spectral.hpp"

namespace dpa::fpca {

std::string_view to_string(Domain d) {
    switch (d) {
    case Domain::X: return "X";
    case Domain::Y: return "Y";
    case Domain::Concatenated: return "Concatenated";
    }
    return "?";
}

Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& grid) {
    const Eigen::Index p = grid.size();
    if (p < 2) throw InvalidInputError("trapezoid_weights: need at least two grid points");
    Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
    for (Eigen::Index i = 0; i + 1 < p; ++i) {
        const double h = grid[i + 1] - grid[i];
        if (!(h > 0.0)) throw InvalidInputError("trapezoid_weights: grid must be strictly increasing");
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    return w;
}

void FunctionalSample::validate() const {
    if (data.rows() < 2) throw InvalidInputError("functional sample: need n >= 2 functions");
    if (data.cols() != grid.size() || quad_weights.size() != grid.size())
        throw InvalidInputError("functional sample: grid, weights and data columns differ in size");
    if (!participant_ids.empty() && static_cast<Eigen::Index>(participant_ids.size()) != data.rows())
        throw InvalidInputError("functional sample: participant ids do not match the rows");
    if (!data.allFinite()) throw InvalidInputError("functional sample: non-finite data");
    const Eigen::VectorXd expected = trapezoid_weights(grid);
    const double tol = 1e-12 * std::max(1.0, expected.cwiseAbs().maxCoeff());
    if ((expected - quad_weights).cwiseAbs().maxCoeff() > tol)
        throw InvalidInputError("functional sample: weights are not the trapezoid weights of the grid");
}

FunctionalSample make_sample(const Eigen::VectorXd& grid, const Eigen::MatrixXd& data, Domain domain,
                             std::vector<std::string> participant_ids) {
    FunctionalSample s;
    s.grid = grid;
    s.quad_weights = trapezoid_weights(grid);
    s.data = data;
    s.domain = domain;
    s.participant_ids = std::move(participant_ids);
    s.validate();
    return s;
}

Eigen::Index select_components(const Eigen::VectorXd& eigenvalues, double target) {
    if (!(target > 0.0 && target <= 1.0))
        throw InvalidInputError("select_components: pve target must lie in (0, 1]");
    const double total = eigenvalues.sum();
    if (!(total > 0.0)) return 0;
    double cum = 0.0;
    for (Eigen::Index l = 0; l < eigenvalues.size(); ++l) {
        cum += eigenvalues[l];
        if (cum / total >= target) return l + 1;
    }
    return eigenvalues.size();
}

Eigen::VectorXd cumulative_pve(const Eigen::VectorXd& eigenvalues, Eigen::Index n) {
    const double total = eigenvalues.sum();
    Eigen::VectorXd out(n);
    double cum = 0.0;
    for (Eigen::Index l = 0; l < n; ++l) {
        cum += eigenvalues[l];
        out[l] = total > 0.0 ? cum / total : 0.0;
    }
    return out;
}

namespace detail {

void orient(Eigen::Ref<Eigen::VectorXd> v) {
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
}

void sorted_eigen(const Eigen::MatrixXd& m, Eigen::VectorXd& values, Eigen::MatrixXd& vectors,
                  const char* who) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw NumericError(std::string(who) + ": eigen-decomposition failed");
    const Eigen::Index n = m.rows();
    values = es.eigenvalues().reverse();
    vectors = es.eigenvectors().rowwise().reverse();
    const double scale = std::max(values.size() ? std::abs(values[0]) : 0.0, 1e-300);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (values[i] < 0.0) {
            worst = std::min(worst, values[i]);
            values[i] = 0.0;
        }
    }
    if (worst < -1e-10 * scale) {
        std::ostringstream msg;
        msg << who << ": clipped negative eigenvalue " << worst << " to 0";
        log::warn(msg.str());
    }
}

FpcaModel fit(const Eigen::VectorXd& grid, const Eigen::VectorXd& weights, const Eigen::MatrixXd& data,
              Domain domain, const std::vector<std::string>& ids, double pve_target) {
    if (!(pve_target > 0.0 && pve_target <= 1.0))
        throw InvalidInputError("ufpca: pve target must lie in (0, 1]");
    const Eigen::Index n = data.rows();
    if (n < 2) throw InvalidInputError("ufpca: need n >= 2 functions");

    FpcaModel m;
    m.domain = domain;
    m.grid = grid;
    m.quad_weights = weights;
    m.participant_ids = ids;
    m.pve_target = pve_target;
    m.mean = data.colwise().mean().transpose();

    const Eigen::MatrixXd centered = data.rowwise() - m.mean.transpose();
    const Eigen::VectorXd sw = weights.cwiseSqrt();
    const Eigen::MatrixXd b = centered * sw.asDiagonal();
    const Eigen::MatrixXd cov = (b.transpose() * b) / static_cast<double>(n - 1);

    Eigen::MatrixXd u;
    sorted_eigen(cov, m.spectrum, u, "ufpca");

    const Eigen::Index k = select_components(m.spectrum, pve_target);
    m.eigenvalues = m.spectrum.head(k);
    m.eigenfunctions.resize(k, grid.size());
    for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::VectorXd phi = u.col(j).cwiseQuotient(sw);
        orient(phi);
        m.eigenfunctions.row(j) = phi.transpose();
    }
    m.scores = centered * weights.asDiagonal() * m.eigenfunctions.transpose();
    m.pve = cumulative_pve(m.spectrum, k);
    return m;
}

} // namespace detail

Eigen::MatrixXd FpcaModel::domain_slice(Domain d) const {
    if (domain != Domain::Concatenated) {
        if (d != domain) throw InvalidInputError("domain_slice: model is not concatenated");
        return eigenfunctions;
    }
    switch (d) {
    case Domain::X: return eigenfunctions.leftCols(split_index);
    case Domain::Y: return eigenfunctions.rightCols(grid.size() - split_index);
    case Domain::Concatenated: return eigenfunctions;
    }
    return eigenfunctions;
}

FpcaModel ufpca(const FunctionalSample& sample, double pve_target) {
    sample.validate();
    return detail::fit(sample.grid, sample.quad_weights, sample.data, sample.domain,
                       sample.participant_ids, pve_target);
}

FpcaModel concat_ufpca(const FunctionalSample& x, const FunctionalSample& y, double pve_target) {
    x.validate();
    y.validate();
    if (x.data.rows() != y.data.rows())
        throw InvalidInputError("concat_ufpca: domains have different numbers of subjects");
    if (!x.participant_ids.empty() && !y.participant_ids.empty() &&
        x.participant_ids != y.participant_ids)
        throw InvalidInputError("concat_ufpca: participant order differs between domains");

    const Eigen::Index px = x.grid.size();
    const Eigen::Index py = y.grid.size();
    // Artificial joined abscissa: the y grid shifted to start one x spacing
    // after the last x point. Only used for display.
    Eigen::VectorXd grid(px + py);
    grid.head(px) = x.grid;
    const double gap = x.grid[px - 1] - x.grid[px - 2];
    grid.tail(py) = y.grid.array() - y.grid[0] + x.grid[px - 1] + gap;
    Eigen::VectorXd weights(px + py);
    weights << x.quad_weights, y.quad_weights;
    Eigen::MatrixXd data(x.data.rows(), px + py);
    data << x.data, y.data;

    FpcaModel m = detail::fit(grid, weights, data, Domain::Concatenated,
                              x.participant_ids.empty() ? y.participant_ids : x.participant_ids,
                              pve_target);
    m.split_index = px;
    return m;
}

Eigen::VectorXd reconstruct(const FpcaModel& model, Eigen::Index i, Eigen::Index m) {
    if (i < 0 || i >= model.samples()) throw InvalidInputError("reconstruct: subject index out of range");
    if (m < 0 || m > model.components())
        throw InvalidInputError("reconstruct: truncation exceeds the retained components");
    Eigen::VectorXd out = model.mean;
    if (m > 0)
        out += (model.scores.row(i).head(m) * model.eigenfunctions.topRows(m)).transpose();
    return out;
}

} // namespace dpa::fpca
