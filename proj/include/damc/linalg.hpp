#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace damc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Singular values in nonincreasing order.
inline Vector singular_values(const Matrix& a) {
  if (a.size() == 0) return Vector();
  return Eigen::BDCSVD<Matrix>(a).singularValues();
}

inline double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return singular_values(a)(0);
}

inline double nuclear_norm(const Matrix& a) { return singular_values(a).sum(); }

}  // namespace damc
