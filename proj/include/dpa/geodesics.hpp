#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dpa/prep.hpp"

namespace dpa::geo {

// P x 2 array of points or momenta, one row per control point (x, y).
using Points = Eigen::Matrix<double, Eigen::Dynamic, 2>;

struct KernelConfig {
    double sigma_v = 0.2;     // deformation kernel width (scaled units)
    double sigma_w = 0.1;     // currents attachment kernel width
    double gamma_data = 10.0; // attachment weight
    int n_steps = 15;         // RK4 steps over tau in [0, 1]
    int control_stride = 10;  // every stride-th curve vertex is a control point

    // Throws InvalidInputError unless every field is positive and the
    // stride divides n_vertices.
    void validate(Eigen::Index n_vertices = prep::kWindowMinutes) const;
};

// ---------------------------------------------------------------------------
// Kernel and Hamiltonian
// ---------------------------------------------------------------------------

/// exp(-|a-b|^2 / sigma^2)
double gauss_kernel(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double sigma);

/// Dense kernel matrix between two point sets.
Eigen::MatrixXd kernel_matrix(const Points& a, const Points& b, double sigma);

/// H(q, p) = 1/2 sum_{a,b} (p_a . p_b) k(q_a, q_b)
double hamiltonian(const Points& q, const Points& p, double sigma_v);

// ---------------------------------------------------------------------------
// Geodesic shooting
// ---------------------------------------------------------------------------

struct Trajectory {
    std::vector<Points> q;  // n_steps + 1 frames
    std::vector<Points> p;

    // RK4 stage states with their kernel matrices (4 per step, upper
    // triangle only), kept when shooting with record_stages so the adjoint
    // can reuse them.
    struct Stage {
        Points q, p;
        Eigen::MatrixXd k;
    };
    std::vector<Stage> stages;

    const Points& final_positions() const { return q.back(); }
};

/// Integrates the Hamiltonian flow with classical RK4 over n_steps.
/// Throws DivergenceError when the state becomes non-finite.
Trajectory shoot(const Points& q0, const Points& p0, double sigma_v, int n_steps,
                 bool record_stages = false);
Trajectory shoot(const Points& q0, const Points& p0, const KernelConfig& config);

/// As shoot(), reusing the storage already held by `out`.
void shoot_into(const Points& q0, const Points& p0, double sigma_v, int n_steps, Trajectory& out,
                bool record_stages);

/// Carries arbitrary points along the flow generated by (q0, p0); returns
/// their positions at tau = 1.
Points flow_points(const Points& q0, const Points& p0, const Points& passengers, double sigma_v,
                   int n_steps);

struct AdjointGradient {
    Points d_q0;
    Points d_p0;
};

/// Reverse sweep through the RK4 steps of `traj`: given the gradient of a
/// terminal cost with respect to (q(1), p(1)), returns its gradient with
/// respect to (q0, p0). Exact for the discrete integrator.
AdjointGradient shoot_adjoint(const Trajectory& traj, const Points& d_q1, const Points& d_p1,
                              double sigma_v);

// ---------------------------------------------------------------------------
// Currents attachment
// ---------------------------------------------------------------------------

/// |A - B|^2 in the currents RKHS, with segment centres and unnormalised
/// tangents. Zero-length segments contribute nothing; a polyline with only
/// degenerate segments is rejected.
double currents_distance(const Points& a, const Points& b, double sigma_w);

struct CurrentsValueGrad {
    double value = 0.0;
    Points d_a;  // gradient with respect to the vertices of a
};

CurrentsValueGrad currents_distance_grad(const Points& a, const Points& b, double sigma_w);

// ---------------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------------

struct MomentaField {
    std::string participant_id;
    int period = 0;  // 0: Baseline->W1, 1: W1->W2
    Points control_points;
    Points momenta;
    double energy = 0.0;         // sum_p |m_p|^2
    double kernel_energy = 0.0;  // 2 H(q0, p0), the path energy of the flow
};

/// Plain sum of squared momentum components.
double deformation_energy(const MomentaField& field);
double deformation_energy(const Points& momenta);

struct MatchOptions {
    int max_iters = 500;
    double rel_tol = 1e-6;
    int max_backtracks = 30;
    double armijo_c = 1e-4;
    double backtrack_factor = 0.5;
};

struct DeformationResult {
    MomentaField momenta_field;
    std::vector<Points> trajectory;
    Points deformed_curve;
    double attachment_residual = 0.0;
    std::vector<double> objective_trace;
    bool converged = false;
    int iterations = 0;
    std::string stop_reason;
};

/// Every stride-th vertex of the curve as (grid, value) points.
Points curve_points(const prep::DiurnalCurve& curve, int stride = 1);

struct ObjectiveValue {
    double value = 0.0;
    double energy_term = 0.0;      // 2 H(q0, p0)
    double attachment = 0.0;       // currents distance (unweighted)
    Points gradient;               // d value / d p0 (empty unless requested)
};

/// J(p0) = 2 H(q0, p0) + gamma_data * currents(q(1), target).
ObjectiveValue matching_objective(const Points& q0, const Points& target, const Points& p0,
                                  const KernelConfig& config, bool with_gradient);

/// Gradient descent with Armijo backtracking from p0 = 0, gradient by the
/// adjoint sweep. The trial step of each line search starts from the
/// short Barzilai-Borwein step (s.y / y.y).
DeformationResult match_points(const Points& q0, const Points& target, const KernelConfig& config,
                               const MatchOptions& options = {});

/// Matches two scaled curves on the same grid; control points and the
/// target polyline are the stride-subsampled curve vertices.
DeformationResult match_curves(const prep::DiurnalCurve& source, const prep::DiurnalCurve& target,
                               const KernelConfig& config, const MatchOptions& options = {});

/// Shoots the field's momenta from its control points; returns the tau = 1
/// polyline.
Points apply_momenta(const MomentaField& field, const KernelConfig& config);
Points apply_momenta(const prep::DiurnalCurve& source, const MomentaField& field,
                     const KernelConfig& config);

// ---------------------------------------------------------------------------
// IO
// ---------------------------------------------------------------------------

// Columns: participant_id,period,point_index,x,y,mx,my
void write_momenta_csv_header(std::ostream& out);
void write_momenta_csv(std::ostream& out, const MomentaField& field);
std::vector<MomentaField> read_momenta_csv(std::istream& in, const std::string& source = "<momenta>");

// 16-byte header ("DPA1", uint32 P, uint8 period, 7 zero bytes) followed by
// P rows of (x, y, mx, my) as little-endian float64.
void write_momenta_binary(std::ostream& out, const MomentaField& field);
MomentaField read_momenta_binary(std::istream& in);

} // namespace dpa::geo
