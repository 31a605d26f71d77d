#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dpa/assoc.hpp"

namespace dpa::assoc {

inline const std::string kInterceptName = "(Intercept)";

struct Design {
    std::vector<std::string> names;
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    std::vector<int> group;  // per row, 0-based in order of first appearance
    std::vector<int> group_size;
    int n_groups = 0;
    std::uint64_t signature = 0;
};

Design build_design(const FeatureTable& table, const Formula& formula);

// Throws InvalidInputError naming the columns that make x rank deficient.
void check_rank(const Design& d);

} // namespace dpa::assoc
