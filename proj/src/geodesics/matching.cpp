#include <cmath>
#include <limits>

#include "dpa/errors.hpp"
#include "dpa/geodesics.hpp"
#include "kernel_ops.hpp"

namespace dpa::geo {

namespace {

struct Forward {
    Trajectory traj;
    double energy_term = 0.0;
    double attachment = 0.0;
    double value = 0.0;
    Points d_q1;  // d value / d q(1)
};

void forward_into(const Points& q0, const Points& target, const Points& p0, const KernelConfig& cfg,
                  Forward& f) {
    shoot_into(q0, p0, cfg.sigma_v, cfg.n_steps, f.traj, true);
    // The first stage kernel is K(q0), upper triangle only.
    const Eigen::MatrixXd& k0 = f.traj.stages.front().k;
    f.energy_term = detail::upper_quadratic(k0, p0);
    auto cur = currents_distance_grad(f.traj.q.back(), target, cfg.sigma_w);
    f.attachment = cur.value;
    f.value = f.energy_term + cfg.gamma_data * cur.value;
    f.d_q1 = cfg.gamma_data * cur.d_a;
}

Forward forward(const Points& q0, const Points& target, const Points& p0, const KernelConfig& cfg) {
    Forward f;
    forward_into(q0, target, p0, cfg, f);
    return f;
}

Points gradient(const Points& p0, const Forward& f, const KernelConfig& cfg) {
    const Points zero = Points::Zero(p0.rows(), 2);
    const AdjointGradient adj = shoot_adjoint(f.traj, f.d_q1, zero, cfg.sigma_v);
    // d(2H)/dp0 = 2 K(q0) p0
    Points kp = f.traj.stages.front().k.selfadjointView<Eigen::Upper>() * p0;
    return 2.0 * kp + adj.d_p0;
}

} // namespace

Points curve_points(const prep::DiurnalCurve& curve, int stride) {
    if (stride <= 0) throw InvalidInputError("curve_points: stride must be positive");
    if (curve.grid.size() != curve.values.size())
        throw InvalidInputError("curve_points: grid and values differ in length");
    const Eigen::Index n = (curve.values.size() + stride - 1) / stride;
    Points pts(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        pts(i, 0) = curve.grid[i * stride];
        pts(i, 1) = curve.values[i * stride];
    }
    return pts;
}

ObjectiveValue matching_objective(const Points& q0, const Points& target, const Points& p0,
                                  const KernelConfig& config, bool with_gradient) {
    if (q0.rows() != p0.rows())
        throw InvalidInputError("matching_objective: control points and momenta differ in length");
    const Forward f = forward(q0, target, p0, config);
    ObjectiveValue out;
    out.value = f.value;
    out.energy_term = f.energy_term;
    out.attachment = f.attachment;
    if (with_gradient) out.gradient = gradient(p0, f, config);
    return out;
}

DeformationResult match_points(const Points& q0, const Points& target, const KernelConfig& config,
                               const MatchOptions& options) {
    if (q0.rows() < 2) throw InvalidInputError("match: need at least two control points");
    if (options.max_iters < 0 || options.max_backtracks <= 0)
        throw InvalidInputError("match: invalid optimizer options");

    Points p = Points::Zero(q0.rows(), 2);
    Forward cur = forward(q0, target, p, config);
    Points g = gradient(p, cur, config);

    DeformationResult res;
    res.objective_trace.push_back(cur.value);

    Points s_prev, y_prev;
    double step = 1.0;
    bool have_bb = false;
    Forward trial;
    Points p_new;
    res.stop_reason = "max iterations";

    int iter = 0;
    for (; iter < options.max_iters; ++iter) {
        const double gnorm2 = g.squaredNorm();
        if (!(gnorm2 > 1e-28)) {
            res.converged = true;
            res.stop_reason = "zero gradient";
            break;
        }

        if (have_bb) {
            const double sy = (s_prev.array() * y_prev.array()).sum();
            if (sy > 0.0) step = sy / y_prev.squaredNorm();
            else step *= 2.0;
        }

        bool accepted = false;
        for (int b = 0; b < options.max_backtracks; ++b) {
            p_new = p - step * g;
            try {
                forward_into(q0, target, p_new, config, trial);
                if (std::isfinite(trial.value) &&
                    trial.value <= cur.value - options.armijo_c * step * gnorm2) {
                    accepted = true;
                    break;
                }
            } catch (const DivergenceError&) {
                // Too long a step: treat like an Armijo failure.
            }
            step *= options.backtrack_factor;
        }
        if (!accepted) {
            res.converged = false;
            res.stop_reason = "line search failed";
            break;
        }

        const Points g_new = gradient(p_new, trial, config);
        const double decrease = cur.value - trial.value;
        const double rel = decrease / std::max(std::abs(cur.value), std::numeric_limits<double>::min());

        s_prev = p_new - p;
        y_prev = g_new - g;
        have_bb = true;
        p = std::move(p_new);
        g = g_new;
        std::swap(cur, trial);
        res.objective_trace.push_back(cur.value);

        if (rel < options.rel_tol) {
            res.converged = true;
            res.stop_reason = "relative decrease below tolerance";
            ++iter;
            break;
        }
    }
    res.iterations = iter;

    res.momenta_field.control_points = q0;
    res.momenta_field.momenta = p;
    res.momenta_field.energy = deformation_energy(p);
    res.momenta_field.kernel_energy = cur.energy_term;
    res.trajectory = cur.traj.q;
    res.deformed_curve = cur.traj.q.back();
    res.attachment_residual = currents_distance(res.deformed_curve, target, config.sigma_w);
    return res;
}

DeformationResult match_curves(const prep::DiurnalCurve& source, const prep::DiurnalCurve& target,
                               const KernelConfig& config, const MatchOptions& options) {
    if (source.grid.size() != target.grid.size() ||
        (source.grid - target.grid).cwiseAbs().maxCoeff() > 1e-12)
        throw InvalidInputError("match_curves: source and target are not on the same grid");
    config.validate(source.grid.size());

    const Points q0 = curve_points(source, config.control_stride);
    const Points tgt = curve_points(target, config.control_stride);
    DeformationResult res = match_points(q0, tgt, config, options);
    res.momenta_field.participant_id = source.participant_id;
    res.momenta_field.period = static_cast<int>(source.visit);
    return res;
}

Points apply_momenta(const MomentaField& field, const KernelConfig& config) {
    if (field.control_points.rows() != field.momenta.rows())
        throw InvalidInputError("apply_momenta: momenta not defined on the control points");
    return shoot(field.control_points, field.momenta, config.sigma_v, config.n_steps).q.back();
}

Points apply_momenta(const prep::DiurnalCurve& source, const MomentaField& field,
                     const KernelConfig& config) {
    const Points q0 = curve_points(source, config.control_stride);
    if (q0.rows() != field.momenta.rows() ||
        (q0 - field.control_points).cwiseAbs().maxCoeff() > 1e-9)
        throw InvalidInputError("apply_momenta: momenta are not defined on this source's control points");
    return shoot(q0, field.momenta, config.sigma_v, config.n_steps).q.back();
}

} // namespace dpa::geo
