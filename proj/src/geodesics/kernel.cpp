#include "dpa/errors.hpp"
#include "dpa/geodesics.hpp"
#include "kernel_ops.hpp"

namespace dpa::geo {

void KernelConfig::validate(Eigen::Index n_vertices) const {
    if (!(sigma_v > 0.0)) throw InvalidInputError("kernel config: sigma_v must be > 0");
    if (!(sigma_w > 0.0)) throw InvalidInputError("kernel config: sigma_w must be > 0");
    if (!(gamma_data > 0.0)) throw InvalidInputError("kernel config: gamma_data must be > 0");
    if (n_steps <= 0) throw InvalidInputError("kernel config: n_steps must be positive");
    if (control_stride <= 0) throw InvalidInputError("kernel config: control_stride must be positive");
    if (n_vertices % control_stride != 0)
        throw InvalidInputError("kernel config: control_stride " + std::to_string(control_stride) +
                                " does not divide " + std::to_string(n_vertices));
}

double gauss_kernel(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double sigma) {
    if (!(sigma > 0.0)) throw InvalidInputError("gauss_kernel: sigma must be > 0");
    return std::exp(-(a - b).squaredNorm() / (sigma * sigma));
}

Eigen::MatrixXd kernel_matrix(const Points& a, const Points& b, double sigma) {
    if (!(sigma > 0.0)) throw InvalidInputError("kernel_matrix: sigma must be > 0");
    return detail::kernel(a, b, sigma);
}

double hamiltonian(const Points& q, const Points& p, double sigma_v) {
    if (q.rows() != p.rows()) throw InvalidInputError("hamiltonian: q and p differ in length");
    const Eigen::MatrixXd k = detail::kernel(q, q, sigma_v);
    return 0.5 * (p * p.transpose()).cwiseProduct(k).sum();
}

double deformation_energy(const Points& momenta) { return momenta.squaredNorm(); }

double deformation_energy(const MomentaField& field) { return deformation_energy(field.momenta); }

} // namespace dpa::geo
