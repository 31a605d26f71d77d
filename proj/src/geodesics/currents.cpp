#include "dpa/errors.hpp"
#include "dpa/geodesics.hpp"
#include "kernel_ops.hpp"

namespace dpa::geo {

namespace {

struct Segments {
    Points centers;
    Points tangents;
};

Segments segments_of(const Points& v) {
    const Eigen::Index f = v.rows() - 1;
    Segments s;
    s.centers = 0.5 * (v.topRows(f) + v.bottomRows(f));
    s.tangents = v.bottomRows(f) - v.topRows(f);
    return s;
}

// Segments with nonzero length only.
Segments nondegenerate(const Segments& s) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < s.tangents.rows(); ++i)
        if (s.tangents.row(i).squaredNorm() > 0.0) keep.push_back(i);
    Segments out;
    out.centers.resize(static_cast<Eigen::Index>(keep.size()), 2);
    out.tangents.resize(static_cast<Eigen::Index>(keep.size()), 2);
    for (std::size_t j = 0; j < keep.size(); ++j) {
        out.centers.row(static_cast<Eigen::Index>(j)) = s.centers.row(keep[j]);
        out.tangents.row(static_cast<Eigen::Index>(j)) = s.tangents.row(keep[j]);
    }
    return out;
}

void check_polyline(const Points& v, const char* name) {
    if (v.rows() < 2)
        throw InvalidInputError(std::string("currents: polyline ") + name + " needs >= 2 vertices");
    if (!v.allFinite())
        throw InvalidInputError(std::string("currents: polyline ") + name + " has non-finite vertices");
}

double inner(const Segments& a, const Segments& b, double sigma) {
    if (a.centers.rows() == 0 || b.centers.rows() == 0) return 0.0;
    const Eigen::MatrixXd k = detail::kernel(a.centers, b.centers, sigma);
    return k.cwiseProduct(a.tangents * b.tangents.transpose()).sum();
}

} // namespace

double currents_distance(const Points& a, const Points& b, double sigma_w) {
    if (!(sigma_w > 0.0)) throw InvalidInputError("currents: sigma_w must be > 0");
    check_polyline(a, "a");
    check_polyline(b, "b");
    const Segments sa = nondegenerate(segments_of(a));
    const Segments sb = nondegenerate(segments_of(b));
    if (sa.centers.rows() == 0 || sb.centers.rows() == 0)
        throw InvalidInputError("currents: polyline has only zero-length segments");
    const double d = inner(sa, sa, sigma_w) - 2.0 * inner(sa, sb, sigma_w) + inner(sb, sb, sigma_w);
    return std::max(d, 0.0);
}

CurrentsValueGrad currents_distance_grad(const Points& a, const Points& b, double sigma_w) {
    if (!(sigma_w > 0.0)) throw InvalidInputError("currents: sigma_w must be > 0");
    check_polyline(a, "a");
    check_polyline(b, "b");
    // Zero-length segments have zero tangent, so keeping them leaves the value
    // unchanged while giving the correct derivative as they open up.
    const Segments sa = segments_of(a);
    const Segments sb = nondegenerate(segments_of(b));
    if (sb.centers.rows() == 0 || nondegenerate(sa).centers.rows() == 0)
        throw InvalidInputError("currents: polyline has only zero-length segments");

    const double c = 2.0 / (sigma_w * sigma_w);
    const Eigen::MatrixXd kaa = detail::kernel(sa.centers, sa.centers, sigma_w);
    const Eigen::MatrixXd kab = detail::kernel(sa.centers, sb.centers, sigma_w);
    const Eigen::MatrixXd kbb = detail::kernel(sb.centers, sb.centers, sigma_w);

    const Eigen::MatrixXd maa = kaa.cwiseProduct(sa.tangents * sa.tangents.transpose());
    const Eigen::MatrixXd mab = kab.cwiseProduct(sa.tangents * sb.tangents.transpose());
    const double bb = kbb.cwiseProduct(sb.tangents * sb.tangents.transpose()).sum();

    CurrentsValueGrad out;
    out.value = maa.sum() - 2.0 * mab.sum() + bb;

    const Points d_t = 2.0 * (kaa * sa.tangents) - 2.0 * (kab * sb.tangents);
    const Eigen::VectorXd raa = maa.rowwise().sum();
    const Eigen::VectorXd rab = mab.rowwise().sum();
    const Points d_c = -2.0 * c * (raa.asDiagonal() * sa.centers - maa * sa.centers) +
                       2.0 * c * (rab.asDiagonal() * sa.centers - mab * sb.centers);

    const Eigen::Index f = sa.centers.rows();
    out.d_a = Points::Zero(a.rows(), 2);
    out.d_a.topRows(f) += 0.5 * d_c - d_t;
    out.d_a.bottomRows(f) += 0.5 * d_c + d_t;
    return out;
}

} // namespace dpa::geo
