#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace effbound::linalg {

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) { return 0.5 * (a + a.transpose()); }

inline double max_abs(const Eigen::MatrixXd& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

inline double min_eigenvalue(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(a), Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(0);
}

inline double max_eigenvalue(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(a), Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(a.rows() - 1);
}

/// lambda_max / lambda_min of a symmetric matrix; infinity when singular.
inline double condition_number(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(a), Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(a.rows() - 1);
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

/// a <= b in the positive semidefinite order, up to `tol` on the eigenvalues of b - a.
inline bool psd_leq(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double tol = 1e-10) {
  return min_eigenvalue(b - a) >= -tol;
}

}  // namespace effbound::linalg
