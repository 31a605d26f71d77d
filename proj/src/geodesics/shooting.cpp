#include "dpa/errors.hpp"
#include "dpa/geodesics.hpp"
#include "kernel_ops.hpp"

namespace dpa::geo {

namespace {

void check_finite(const Points& q, const Points& p, int step) {
    if (!q.allFinite() || !p.allFinite())
        throw DivergenceError("geodesic shooting diverged: non-finite state at step " +
                                  std::to_string(step),
                              step);
}

void check_args(const Points& q0, const Points& p0, double sigma_v, int n_steps, const char* who) {
    if (q0.rows() != p0.rows())
        throw InvalidInputError(std::string(who) + ": q0 and p0 differ in length");
    if (!(sigma_v > 0.0)) throw InvalidInputError(std::string(who) + ": sigma_v must be > 0");
    if (n_steps <= 0) throw InvalidInputError(std::string(who) + ": n_steps must be positive");
}

// Scratch buffers for one RK4 step.
struct StepWork {
    Eigen::MatrixXd k;
    Points dq[4], dp[4];
    Points qs, ps;
};

} // namespace

void shoot_into(const Points& q0, const Points& p0, double sigma_v, int n_steps, Trajectory& out,
                bool record_stages) {
    check_args(q0, p0, sigma_v, n_steps, "shoot");
    check_finite(q0, p0, 0);

    const double h = 1.0 / n_steps;
    const double c = 2.0 / (sigma_v * sigma_v);

    out.q.resize(n_steps + 1);
    out.p.resize(n_steps + 1);
    out.q[0] = q0;
    out.p[0] = p0;
    if (record_stages)
        out.stages.resize(4 * static_cast<std::size_t>(n_steps));
    else
        out.stages.clear();

    StepWork w;
    const double frac[4] = {0.0, 0.5, 0.5, 1.0};
    for (int step = 0; step < n_steps; ++step) {
        const Points& q = out.q[step];
        const Points& p = out.p[step];
        for (int s = 0; s < 4; ++s) {
            Trajectory::Stage* st = record_stages ? &out.stages[4 * step + s] : nullptr;
            Points& qs = st ? st->q : w.qs;
            Points& ps = st ? st->p : w.ps;
            Eigen::MatrixXd& k = st ? st->k : w.k;
            if (s == 0) {
                qs = q;
                ps = p;
            } else {
                qs = q + (frac[s] * h) * w.dq[s - 1];
                ps = p + (frac[s] * h) * w.dp[s - 1];
            }
            detail::upper_kernel_into(qs, sigma_v, k);
            detail::hamiltonian_rhs(qs, ps, k, c, w.dq[s], w.dp[s]);
        }
        out.q[step + 1] = q + (h / 6.0) * (w.dq[0] + 2.0 * w.dq[1] + 2.0 * w.dq[2] + w.dq[3]);
        out.p[step + 1] = p + (h / 6.0) * (w.dp[0] + 2.0 * w.dp[1] + 2.0 * w.dp[2] + w.dp[3]);
        check_finite(out.q[step + 1], out.p[step + 1], step + 1);
    }
}

Trajectory shoot(const Points& q0, const Points& p0, double sigma_v, int n_steps, bool record_stages) {
    Trajectory t;
    shoot_into(q0, p0, sigma_v, n_steps, t, record_stages);
    return t;
}

Trajectory shoot(const Points& q0, const Points& p0, const KernelConfig& config) {
    return shoot(q0, p0, config.sigma_v, config.n_steps);
}

Points flow_points(const Points& q0, const Points& p0, const Points& passengers, double sigma_v,
                   int n_steps) {
    check_args(q0, p0, sigma_v, n_steps, "flow_points");

    const Trajectory traj = shoot(q0, p0, sigma_v, n_steps, true);
    const double h = 1.0 / n_steps;
    const double frac[4] = {0.0, 0.5, 0.5, 1.0};
    Points x = passengers;
    Points v[4];
    Eigen::MatrixXd kx;
    for (int step = 0; step < n_steps; ++step) {
        for (int s = 0; s < 4; ++s) {
            const auto& st = traj.stages[4 * step + s];
            const Points xs = (s == 0) ? x : Points(x + (frac[s] * h) * v[s - 1]);
            detail::kernel_into(xs, st.q, sigma_v, kx);
            v[s] = kx * st.p;
        }
        x += (h / 6.0) * (v[0] + 2.0 * v[1] + 2.0 * v[2] + v[3]);
        if (!x.allFinite())
            throw DivergenceError("point flow diverged at step " + std::to_string(step + 1), step + 1);
    }
    return x;
}

AdjointGradient shoot_adjoint(const Trajectory& traj, const Points& d_q1, const Points& d_p1,
                              double sigma_v) {
    const int n_steps = static_cast<int>(traj.q.size()) - 1;
    if (n_steps <= 0) throw InvalidInputError("shoot_adjoint: empty trajectory");
    const double h = 1.0 / n_steps;
    const double c = 2.0 / (sigma_v * sigma_v);
    const bool cached = traj.stages.size() == 4 * static_cast<std::size_t>(n_steps);

    Points lq = d_q1;
    Points lp = d_p1;

    Trajectory::Stage local[4];
    Points dq[4], dp[4];
    Points aq[4], ap[4];
    Points gq, gp;
    const double frac[4] = {0.0, 0.5, 0.5, 1.0};
    const double weight[4] = {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0};

    for (int step = n_steps - 1; step >= 0; --step) {
        const Trajectory::Stage* stages = nullptr;
        if (cached) {
            stages = &traj.stages[4 * step];
        } else {
            // Recompute the four stages of this step.
            for (int s = 0; s < 4; ++s) {
                auto& st = local[s];
                if (s == 0) {
                    st.q = traj.q[step];
                    st.p = traj.p[step];
                } else {
                    st.q = traj.q[step] + (frac[s] * h) * dq[s - 1];
                    st.p = traj.p[step] + (frac[s] * h) * dp[s - 1];
                }
                detail::upper_kernel_into(st.q, sigma_v, st.k);
                detail::hamiltonian_rhs(st.q, st.p, st.k, c, dq[s], dp[s]);
            }
            stages = local;
        }

        // Adjoints of the stage derivatives; stage s+1 was evaluated at
        // x + frac[s+1] h k_s, so its input adjoint flows back into k_s.
        for (int s = 0; s < 4; ++s) {
            aq[s] = (weight[s] * h) * lq;
            ap[s] = (weight[s] * h) * lp;
        }
        for (int s = 3; s >= 0; --s) {
            const auto& st = stages[s];
            detail::hamiltonian_rhs_vjp(st.q, st.p, st.k, c, aq[s], ap[s], gq, gp);
            lq += gq;
            lp += gp;
            if (s > 0) {
                aq[s - 1] += (frac[s] * h) * gq;
                ap[s - 1] += (frac[s] * h) * gp;
            }
        }
    }
    return {lq, lp};
}

} // namespace dpa::geo
