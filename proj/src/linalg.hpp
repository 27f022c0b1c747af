#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

#include "hybridsens/errors.hpp"

namespace hybridsens::detail {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Least-squares solve that insists on full column rank (relative singular
/// value threshold 1e-12); rows may outnumber columns.
MatrixXd solve_full_rank(const MatrixXd& m, const MatrixXd& rhs, ErrorKind kind,
                         const std::string& what);

/// Gauss-Newton for r(x) = 0 with a full-column-rank Jacobian.
VectorXd newton_solve(const std::function<VectorXd(const VectorXd&)>& r,
                      const std::function<MatrixXd(const VectorXd&)>& jac, VectorXd x,
                      ErrorKind singular_kind, const std::string& what);

}  // namespace hybridsens::detail
