#include <cmath>

#include "dpa/errors.hpp"
#include "dpa/fpca.hpp"
#include "spectral.hpp"

namespace dpa::fpca {

MfpcaModel mfpca(const FpcaModel& model_x, const FpcaModel& model_y, double pve_target) {
    if (!(pve_target > 0.0 && pve_target <= 1.0))
        throw InvalidInputError("mfpca: pve target must lie in (0, 1]");
    const Eigen::Index n = model_x.samples();
    if (n != model_y.samples())
        throw InvalidInputError("mfpca: univariate fits cover different numbers of subjects");
    if (!model_x.participant_ids.empty() && !model_y.participant_ids.empty() &&
        model_x.participant_ids != model_y.participant_ids)
        throw InvalidInputError("mfpca: participant order differs between the univariate fits");
    if (n < 2) throw InvalidInputError("mfpca: need n >= 2 subjects");

    MfpcaModel m;
    m.kx = model_x.components();
    m.ky = model_y.components();
    m.pve_target = pve_target;
    m.participant_ids = model_x.participant_ids.empty() ? model_y.participant_ids : model_x.participant_ids;
    const Eigen::Index k = m.kx + m.ky;

    Eigen::MatrixXd xi(n, k);
    xi << model_x.scores, model_y.scores;
    m.z = (xi.transpose() * xi) / static_cast<double>(n - 1);

    if (k > 0) {
        detail::sorted_eigen(m.z, m.spectrum, m.full_weights, "mfpca");
        for (Eigen::Index j = 0; j < k; ++j) detail::orient(m.full_weights.col(j));
    } else {
        m.spectrum.resize(0);
        m.full_weights.resize(0, 0);
    }

    const Eigen::Index l = select_components(m.spectrum, pve_target);
    m.eigenvalues = m.spectrum.head(l);
    m.weights = m.full_weights.leftCols(l);
    m.pve = cumulative_pve(m.spectrum, l);
    m.eigenfunctions_x = m.weights.topRows(m.kx).transpose() * model_x.eigenfunctions;
    m.eigenfunctions_y = m.weights.bottomRows(m.ky).transpose() * model_y.eigenfunctions;
    if (m.kx == 0) m.eigenfunctions_x = Eigen::MatrixXd::Zero(l, model_x.grid.size());
    if (m.ky == 0) m.eigenfunctions_y = Eigen::MatrixXd::Zero(l, model_y.grid.size());
    m.scores = xi * m.weights;
    return m;
}

geo::MomentaField pc_deformation(const MfpcaModel& model, const geo::MomentaField& mean_field,
                                 Eigen::Index l, double scale) {
    if (l < 1 || l > model.retained())
        throw InvalidInputError("pc_deformation: component index out of range");
    const Eigen::Index p = mean_field.momenta.rows();
    if (model.eigenfunctions_x.cols() != p || model.eigenfunctions_y.cols() != p)
        throw InvalidInputError("pc_deformation: eigenfunctions are not defined on the control points");
    geo::MomentaField out = mean_field;
    out.momenta.col(0) += scale * model.eigenfunctions_x.row(l - 1).transpose();
    out.momenta.col(1) += scale * model.eigenfunctions_y.row(l - 1).transpose();
    out.energy = geo::deformation_energy(out.momenta);
    out.kernel_energy = 2.0 * geo::hamiltonian(out.control_points, out.momenta, geo::KernelConfig{}.sigma_v);
    return out;
}

geo::MomentaField pc_deformation(const MfpcaModel& model, const geo::MomentaField& mean_field,
                                 Eigen::Index l) {
    if (l < 1 || l > model.retained())
        throw InvalidInputError("pc_deformation: component index out of range");
    return pc_deformation(model, mean_field, l, std::sqrt(model.eigenvalues[l - 1]));
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> reconstruct(const MfpcaModel& model,
                                                        const FpcaModel& model_x,
                                                        const FpcaModel& model_y, Eigen::Index i,
                                                        Eigen::Index m) {
    if (i < 0 || i >= model.scores.rows()) throw InvalidInputError("reconstruct: subject index out of range");
    if (m < 0 || m > model.retained())
        throw InvalidInputError("reconstruct: truncation exceeds the retained components");
    Eigen::VectorXd x = model_x.mean;
    Eigen::VectorXd y = model_y.mean;
    if (m > 0) {
        x += (model.scores.row(i).head(m) * model.eigenfunctions_x.topRows(m)).transpose();
        y += (model.scores.row(i).head(m) * model.eigenfunctions_y.topRows(m)).transpose();
    }
    return {x, y};
}

std::pair<FunctionalSample, FunctionalSample> momenta_samples(
    const std::vector<geo::MomentaField>& fields) {
    if (fields.size() < 2) throw InvalidInputError("momenta_samples: need at least two momenta fields");
    const auto& first = fields.front();
    const Eigen::Index p = first.control_points.rows();
    const Eigen::Index n = static_cast<Eigen::Index>(fields.size());
    const Eigen::VectorXd grid = first.control_points.col(0);
    Eigen::MatrixXd dx(n, p), dy(n, p);
    std::vector<std::string> ids;
    ids.reserve(fields.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& f = fields[static_cast<std::size_t>(i)];
        if (f.period != first.period)
            throw InvalidInputError("momenta_samples: fields from different periods");
        if (f.momenta.rows() != p || f.control_points.rows() != p)
            throw InvalidInputError("momenta_samples: fields have different numbers of control points");
        if ((f.control_points.col(0) - grid).cwiseAbs().maxCoeff() > 1e-9)
            throw InvalidInputError("momenta_samples: control-point abscissae differ for " + f.participant_id);
        dx.row(i) = f.momenta.col(0).transpose();
        dy.row(i) = f.momenta.col(1).transpose();
        ids.push_back(f.participant_id);
    }
    return {make_sample(grid, dx, Domain::X, ids), make_sample(grid, dy, Domain::Y, ids)};
}

PeriodFpca fit_period(const std::vector<geo::MomentaField>& fields, double univariate_pve,
                      double multivariate_pve) {
    auto [sx, sy] = momenta_samples(fields);
    PeriodFpca fit;
    fit.period = fields.front().period;
    fit.x = ufpca(sx, univariate_pve);
    fit.y = ufpca(sy, univariate_pve);
    fit.mfpca = mfpca(fit.x, fit.y, multivariate_pve);

    const Eigen::Index p = sx.grid.size();
    fit.mean_field.participant_id = "mean";
    fit.mean_field.period = fit.period;
    fit.mean_field.control_points = geo::Points::Zero(p, 2);
    for (const auto& f : fields) fit.mean_field.control_points += f.control_points;
    fit.mean_field.control_points /= static_cast<double>(fields.size());
    fit.mean_field.momenta.resize(p, 2);
    fit.mean_field.momenta.col(0) = fit.x.mean;
    fit.mean_field.momenta.col(1) = fit.y.mean;
    fit.mean_field.energy = geo::deformation_energy(fit.mean_field.momenta);
    fit.mean_field.kernel_energy = 2.0 * geo::hamiltonian(fit.mean_field.control_points,
                                                          fit.mean_field.momenta,
                                                          geo::KernelConfig{}.sigma_v);
    return fit;
}

} // namespace dpa::fpca

namespace dpa::fpca {

ConcatComparison compare_concat(const MfpcaModel& model, const FpcaModel& concat, Eigen::Index component) {
    if (concat.domain != Domain::Concatenated) throw InvalidInputError("compare_concat: model is not concatenated");
    if (component < 1 || component > model.retained() || component > concat.components())
        throw InvalidInputError("compare_concat: component index out of range");
    const Eigen::MatrixXd cx = concat.domain_slice(Domain::X);
    const Eigen::MatrixXd cy = concat.domain_slice(Domain::Y);
    if (cx.cols() != model.eigenfunctions_x.cols() || cy.cols() != model.eigenfunctions_y.cols())
        throw InvalidInputError("compare_concat: grids differ");
    auto cosine = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        const double den = a.norm() * b.norm();
        return den > 0.0 ? std::abs(a.dot(b)) / den : 0.0;
    };
    ConcatComparison c;
    c.component = component;
    const Eigen::Index l = component - 1;
    c.cosine_x = cosine(model.eigenfunctions_x.row(l).transpose(), cx.row(l).transpose());
    c.cosine_y = cosine(model.eigenfunctions_y.row(l).transpose(), cy.row(l).transpose());
    const Eigen::Index ex = cx.cols() - 1;
    for (Eigen::Index k = 0; k < concat.components(); ++k)
        c.boundary_concat += concat.eigenvalues[k] * cx(k, ex) * cy(k, 0);
    for (Eigen::Index k = 0; k < model.retained(); ++k)
        c.boundary_mfpca += model.eigenvalues[k] * model.eigenfunctions_x(k, ex) * model.eigenfunctions_y(k, 0);
    return c;
}

} // namespace dpa::fpca
