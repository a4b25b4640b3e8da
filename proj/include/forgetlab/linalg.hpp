#ifndef FORGETLAB_LINALG_HPP
#define FORGETLAB_LINALG_HPP

#include <algorithm>

#include <Eigen/SVD>

#include "forgetlab/core.hpp"

namespace forgetlab {

/// Moore-Penrose pseudoinverse via SVD. Singular values at or below
/// max(rows, cols) * sigma_max * 1e-12 are treated as zero.
inline Matrix pseudo_inverse(const Matrix& a) {
  if (a.size() == 0) return Matrix(a.cols(), a.rows());
  if (!a.allFinite()) throw ShapeError("pseudo_inverse: non-finite input");
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  const double cutoff =
      static_cast<double>(std::max(a.rows(), a.cols())) * smax * 1e-12;
  Vector inv = Vector::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) inv(i) = 1.0 / s(i);
  }
  Matrix result = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  if (!result.allFinite()) throw std::runtime_error("pseudo_inverse: SVD failed");
  return result;
}

/// x^T S x
inline double quadratic_form(const Vector& x, const Matrix& s) {
  return x.dot(s * x);
}

}  // namespace forgetlab

#endif  // FORGETLAB_LINALG_HPP
