#pragma once

#include <cmath>

#include "dpa/geodesics.hpp"

namespace dpa::geo::detail {

// Fills k with exp(-|a_i - b_j|^2 / sigma^2). Squared distances come from
// explicit differences so coincident points give exactly 1.
inline void kernel_into(const Points& a, const Points& b, double sigma, Eigen::MatrixXd& k) {
    const Eigen::Index n = a.rows();
    const Eigen::Index m = b.rows();
    k.resize(n, m);
    const double inv = -1.0 / (sigma * sigma);
    const double* __restrict ax = a.col(0).data();
    const double* __restrict ay = a.col(1).data();
    for (Eigen::Index j = 0; j < m; ++j) {
        const double bx = b(j, 0);
        const double by = b(j, 1);
        double* __restrict kc = k.col(j).data();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double dx = ax[i] - bx;
            const double dy = ay[i] - by;
            kc[i] = (dx * dx + dy * dy) * inv;
        }
    }
    k.array() = k.array().exp();
}

inline Eigen::MatrixXd kernel(const Points& a, const Points& b, double sigma) {
    Eigen::MatrixXd k;
    kernel_into(a, b, sigma, k);
    return k;
}

// Kernel matrix of one point set, upper triangle (diagonal included) only.
// The strictly lower part is left unspecified.
inline void upper_kernel_into(const Points& a, double sigma, Eigen::MatrixXd& k) {
    const Eigen::Index n = a.rows();
    k.resize(n, n);
    const double inv = -1.0 / (sigma * sigma);
    const double* __restrict ax = a.col(0).data();
    const double* __restrict ay = a.col(1).data();
    for (Eigen::Index j = 0; j < n; ++j) {
        const double bx = ax[j];
        const double by = ay[j];
        double* __restrict kc = k.col(j).data();
        for (Eigen::Index i = 0; i < j; ++i) {
            const double dx = ax[i] - bx;
            const double dy = ay[i] - by;
            kc[i] = (dx * dx + dy * dy) * inv;
        }
        k.col(j).head(j).array() = k.col(j).head(j).array().exp();
        kc[j] = 1.0;
    }
}

// sum_{a,b} k_ab (p_a . p_b) from the upper triangle of k.
inline double upper_quadratic(const Eigen::MatrixXd& k, const Points& p) {
    const Eigen::Index n = p.rows();
    const double* __restrict px = p.col(0).data();
    const double* __restrict py = p.col(1).data();
    double off = 0.0;
    double diag = 0.0;
    for (Eigen::Index b = 0; b < n; ++b) {
        const double* __restrict kc = k.col(b).data();
        const double pbx = px[b], pby = py[b];
        double s = 0.0;
        for (Eigen::Index a = 0; a < b; ++a) s += kc[a] * (px[a] * pbx + py[a] * pby);
        off += s;
        diag += kc[b] * (pbx * pbx + pby * pby);
    }
    return diag + 2.0 * off;
}

namespace inner {

inline void rhs_column(Eigen::Index b, const double* __restrict kc, const double* __restrict qx,
                       const double* __restrict qy, const double* __restrict px,
                       const double* __restrict py, double* __restrict dqx, double* __restrict dqy,
                       double* __restrict dpx, double* __restrict dpy) {
    const double pbx = px[b], pby = py[b], qbx = qx[b], qby = qy[b];
    double sqx = 0.0, sqy = 0.0, spx = 0.0, spy = 0.0;
    for (Eigen::Index a = 0; a < b; ++a) {
        const double kab = kc[a];
        dqx[a] += kab * pbx;
        dqy[a] += kab * pby;
        sqx += kab * px[a];
        sqy += kab * py[a];
        const double w = kab * (px[a] * pbx + py[a] * pby);
        const double fx = w * (qx[a] - qbx);
        const double fy = w * (qy[a] - qby);
        dpx[a] += fx;
        dpy[a] += fy;
        spx += fx;
        spy += fy;
    }
    dqx[b] += sqx + kc[b] * pbx;
    dqy[b] += sqy + kc[b] * pby;
    dpx[b] -= spx;
    dpy[b] -= spy;
}

inline void vjp_column(Eigen::Index b, double c, const double* __restrict kc,
                       const double* __restrict qx, const double* __restrict qy,
                       const double* __restrict px, const double* __restrict py,
                       const double* __restrict ax, const double* __restrict ay,
                       const double* __restrict bx, const double* __restrict by,
                       double* __restrict gqx, double* __restrict gqy, double* __restrict gpx,
                       double* __restrict gpy) {
    const double qbx = qx[b], qby = qy[b], pbx = px[b], pby = py[b];
    const double abx = ax[b], aby = ay[b], bbx = bx[b], bby = by[b];
    double sgpx = 0.0, sgpy = 0.0, sgqx = 0.0, sgqy = 0.0;
    for (Eigen::Index a = 0; a < b; ++a) {
        const double kab = kc[a];
        const double dx = qx[a] - qbx;
        const double dy = qy[a] - qby;
        const double dbx = bx[a] - bbx;
        const double dby = by[a] - bby;
        const double ce = c * (dbx * dx + dby * dy);
        const double aab = kab * (px[a] * pbx + py[a] * pby);
        gpx[a] += kab * (abx + ce * pbx);
        gpy[a] += kab * (aby + ce * pby);
        sgpx += kab * (ax[a] + ce * px[a]);
        sgpy += kab * (ay[a] + ce * py[a]);
        const double s = kab * (ax[a] * pbx + ay[a] * pby + abx * px[a] + aby * py[a]) + aab * ce;
        const double tx = aab * dbx - s * dx;
        const double ty = aab * dby - s * dy;
        gqx[a] += tx;
        gqy[a] += ty;
        sgqx += tx;
        sgqy += ty;
    }
    gpx[b] += sgpx + kc[b] * abx;
    gpy[b] += sgpy + kc[b] * aby;
    gqx[b] -= sgqx;
    gqy[b] -= sgqy;
}

} // namespace inner

// Right-hand side of the Hamiltonian system for the Gaussian kernel:
//   dq_a/dt =  sum_b k_ab p_b
//   dp_a/dt =  c sum_b k_ab (p_a . p_b)(q_a - q_b),  c = 2 / sigma^2
// Only the upper triangle of k (the kernel matrix of q) is read; each pair
// a < b is visited once and contributes to both ends.
inline void hamiltonian_rhs(const Points& q, const Points& p, const Eigen::MatrixXd& k, double c,
                            Points& dq, Points& dp) {
    const Eigen::Index n = q.rows();
    dq.setZero(n, 2);
    dp.setZero(n, 2);
    for (Eigen::Index b = 0; b < n; ++b)
        inner::rhs_column(b, k.col(b).data(), q.col(0).data(), q.col(1).data(), p.col(0).data(),
                          p.col(1).data(), dq.col(0).data(), dq.col(1).data(), dp.col(0).data(),
                          dp.col(1).data());
    dp *= c;
}

// Vector-Jacobian product of hamiltonian_rhs: for adjoints (alpha, beta) of
// (dq, dp), writes the gradient of alpha.dq + beta.dp with respect to q and
// p into gq, gp.
//
//   gp_a = sum_b k_ab [alpha_b + c e_ab p_b]
//   gq_a = c sum_b [A_ab (beta_a - beta_b) - s_ab (q_a - q_b)]
// with e_ab = (beta_a - beta_b).(q_a - q_b), A_ab = k_ab (p_a . p_b),
// s_ab = k_ab (alpha_a . p_b + alpha_b . p_a) + c A_ab e_ab.
// e, A and s are symmetric and the gq summand antisymmetric, so again only
// the upper triangle is visited.
inline void hamiltonian_rhs_vjp(const Points& q, const Points& p, const Eigen::MatrixXd& k, double c,
                                const Points& alpha, const Points& beta, Points& gq, Points& gp) {
    const Eigen::Index n = q.rows();
    gq.setZero(n, 2);
    gp.setZero(n, 2);
    for (Eigen::Index b = 0; b < n; ++b)
        inner::vjp_column(b, c, k.col(b).data(), q.col(0).data(), q.col(1).data(), p.col(0).data(),
                          p.col(1).data(), alpha.col(0).data(), alpha.col(1).data(),
                          beta.col(0).data(), beta.col(1).data(), gq.col(0).data(),
                          gq.col(1).data(), gp.col(0).data(), gp.col(1).data());
    gq *= c;
}

} // namespace dpa::geo::detail
