#ifndef FORGETLAB_GEOMETRY_HPP
#define FORGETLAB_GEOMETRY_HPP

// Geometry of a set of feature vectors: norms, pairwise overlap, and the
// allocated capacity of each feature.
//
// Allocated capacity of feature i:
//
//   C_i = (phi_i . phi_i)^2 / sum_j (phi_i . phi_j)^2   if |phi_i| > 0
//   C_i = 0                                             otherwise
//
// The sum runs over every column, including j = i, so C_i = 1 exactly when
// phi_i is orthogonal to all other columns.

#include <utility>

#include "forgetlab/core.hpp"

namespace forgetlab {

/// m x n matrix whose columns are feature vectors in an m-dimensional
/// activation space. Construction validates shape and finiteness.
class FeatureMatrix {
 public:
  explicit FeatureMatrix(Matrix data) : data_(std::move(data)) {
    detail::require(data_.rows() >= 1 && data_.cols() >= 1,
                    "FeatureMatrix: need at least one row and one column");
    detail::require(data_.allFinite(), "FeatureMatrix: non-finite entry");
  }

  Index dims() const { return data_.rows(); }
  Index features() const { return data_.cols(); }
  auto column(Index i) const { return data_.col(i); }
  const Matrix& data() const { return data_; }

 private:
  Matrix data_;
};

/// Capacity, norms and overlap of a feature matrix, computed eagerly.
struct CapacityReport {
  Vector capacity;             // C_i in [0, 1]
  Vector norms;                // |phi_i|
  Matrix overlap;              // cosine similarities, 0 for zero columns
  Vector normalized_capacity;  // C_i of the unit-normalized columns
};

namespace detail {

inline Vector capacity_from_gram(const Matrix& gram) {
  const Index n = gram.rows();
  Vector c = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) {
    const double self = gram(i, i);
    if (std::sqrt(std::max(self, 0.0)) < kZeroNorm) continue;
    const double denom = gram.row(i).squaredNorm();
    c(i) = self * self / denom;
  }
  return c;
}

inline Matrix unit_columns(const Matrix& phi, const Vector& norms) {
  Matrix u = Matrix::Zero(phi.rows(), phi.cols());
  for (Index i = 0; i < phi.cols(); ++i) {
    if (norms(i) >= kZeroNorm) u.col(i) = phi.col(i) / norms(i);
  }
  return u;
}

}  // namespace detail

/// Allocated capacity of every column of a raw matrix (no validation).
inline Vector capacity_of(const Matrix& phi) {
  return detail::capacity_from_gram(phi.transpose() * phi);
}

/// Allocated capacity of the unit-normalized columns; zero columns stay 0.
inline Vector normalized_capacity_of(const Matrix& phi) {
  const Vector norms = phi.colwise().norm().transpose();
  const Matrix u = detail::unit_columns(phi, norms);
  return detail::capacity_from_gram(u.transpose() * u);
}

inline CapacityReport allocated_capacity(const FeatureMatrix& phi) {
  const Matrix& d = phi.data();
  CapacityReport r;
  r.norms = d.colwise().norm().transpose();
  r.capacity = detail::capacity_from_gram(d.transpose() * d);
  const Matrix u = detail::unit_columns(d, r.norms);
  r.overlap = u.transpose() * u;
  for (Index i = 0; i < r.overlap.rows(); ++i) {
    if (r.norms(i) >= kZeroNorm) r.overlap(i, i) = 1.0;
  }
  r.normalized_capacity = detail::capacity_from_gram(r.overlap);
  return r;
}

/// n x n cosine similarity between feature vectors.
inline Matrix overlap_matrix(const FeatureMatrix& phi) {
  return allocated_capacity(phi).overlap;
}

/// r^T a: the readout of one feature from an activation vector.
inline double feature_readout(const ReadoutVector& r, const Vector& activation) {
  if (r.size() != activation.size()) {
    throw ShapeError("feature_readout: readout has length " +
                     std::to_string(r.size()) + ", activation has length " +
                     std::to_string(activation.size()));
  }
  return r.dot(activation);
}

}  // namespace forgetlab

#endif  // FORGETLAB_GEOMETRY_HPP
