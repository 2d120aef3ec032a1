#pragma once

#include <vector>

#include <Eigen/Core>

namespace dsp {

// minimum-cost assignment of rows to columns (rectangular allowed);
// result[row] = column or -1 when the row is left unassigned
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace dsp
