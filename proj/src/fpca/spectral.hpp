#pragma once

#include <Eigen/Core>

namespace dpa::fpca::detail {

// Sign flip so the largest-magnitude entry of v is positive.
void orient(Eigen::Ref<Eigen::VectorXd> v);

// Descending eigen-decomposition of a symmetric PSD matrix. Negative
// round-off is clipped at zero, with a warning when it is not negligible.
void sorted_eigen(const Eigen::MatrixXd& m, Eigen::VectorXd& values, Eigen::MatrixXd& vectors,
                  const char* who);

} // namespace dpa::fpca::detail
