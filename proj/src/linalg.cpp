#include "linalg.hpp"

#include <algorithm>
#include <cmath>

namespace hybridsens::detail {

MatrixXd solve_full_rank(const MatrixXd& m, const MatrixXd& rhs, ErrorKind kind,
                         const std::string& what) {
  if (m.cols() == 0) return MatrixXd::Zero(0, rhs.cols());
  if (m.rows() < m.cols()) {
    throw HybridError(kind, what + ": underdetermined system (" + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()) + ")");
  }
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (!(sv.minCoeff() > 1e-12 * std::max(1.0, sv.maxCoeff()))) {
    throw HybridError(kind, what + ": matrix is numerically singular (smallest singular value " +
                                std::to_string(sv.minCoeff()) + ")");
  }
  return svd.solve(rhs);
}

VectorXd newton_solve(const std::function<VectorXd(const VectorXd&)>& r,
                      const std::function<MatrixXd(const VectorXd&)>& jac, VectorXd x,
                      ErrorKind singular_kind, const std::string& what) {
  constexpr int kMaxIter = 50;
  for (int it = 0; it < kMaxIter; ++it) {
    const VectorXd res = r(x);
    const double scale = 1.0 + (x.size() ? x.cwiseAbs().maxCoeff() : 0.0);
    if (res.size() == 0 || res.cwiseAbs().maxCoeff() <= 1e-14 * scale) return x;
    const VectorXd dx = solve_full_rank(jac(x), -res, singular_kind, what);
    x += dx;
    if (!x.allFinite()) break;
    if (dx.size() == 0 || dx.cwiseAbs().maxCoeff() <= 1e-13 * scale) {
      // One more residual check guards against a stagnating inconsistent
      // least-squares fit.
      const VectorXd fin = r(x);
      if (fin.size() == 0 || fin.cwiseAbs().maxCoeff() <= 1e-8 * scale) return x;
      throw HybridError(singular_kind, what + ": equations are inconsistent (residual " +
                                           std::to_string(fin.cwiseAbs().maxCoeff()) + ")");
    }
  }
  throw HybridError(ErrorKind::NewtonDivergence, what + ": Newton iteration did not converge");
}

}  // namespace hybridsens::detail
