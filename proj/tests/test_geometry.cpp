#include <gtest/gtest.h>

#include "forgetlab/geometry.hpp"
#include "forgetlab/random.hpp"

using namespace forgetlab;

namespace {

Matrix mat(Index r, Index c, std::initializer_list<double> v) {
  Matrix m(r, c);
  auto it = v.begin();
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = *it++;
  return m;
}

}  // namespace

TEST(Capacity, IdentityGivesFullCapacity) {
  const auto r = allocated_capacity(FeatureMatrix(Matrix::Identity(2, 2)));
  EXPECT_DOUBLE_EQ(r.capacity(0), 1.0);
  EXPECT_DOUBLE_EQ(r.capacity(1), 1.0);
}

TEST(Capacity, TwoIdenticalUnitColumnsShareHalf) {
  const auto r = allocated_capacity(FeatureMatrix(mat(2, 2, {1, 1, 0, 0})));
  EXPECT_DOUBLE_EQ(r.capacity(0), 0.5);
  EXPECT_DOUBLE_EQ(r.capacity(1), 0.5);
}

TEST(Capacity, ZeroColumnHasZeroCapacity) {
  const auto r = allocated_capacity(FeatureMatrix(mat(2, 3, {1, 0, 0.3, 0, 0, 0.4})));
  EXPECT_EQ(r.capacity(1), 0.0);
  EXPECT_EQ(r.normalized_capacity(1), 0.0);
  EXPECT_EQ(r.overlap.row(1).norm(), 0.0);
}

TEST(Capacity, BelowZeroNormThresholdCountsAsZero) {
  Matrix phi = Matrix::Identity(2, 2);
  phi(1, 1) = 1e-13;
  const auto r = allocated_capacity(FeatureMatrix(phi));
  EXPECT_EQ(r.capacity(1), 0.0);
  EXPECT_DOUBLE_EQ(r.capacity(0), 1.0);
}

TEST(Capacity, BoundedAndScaleInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Index m = 1 + static_cast<Index>(rng.index(6)), n = 1 + static_cast<Index>(rng.index(10));
    const Matrix phi = rng.normal_matrix(m, n);
    const double c = (rng.uniform() < 0.5 ? -1.0 : 1.0) * std::exp(rng.uniform(-5.0, 5.0));
    const Vector a = capacity_of(phi);
    const Vector b = capacity_of(c * phi);
    EXPECT_TRUE((a.array() >= 0.0).all() && (a.array() <= 1.0 + 1e-15).all());
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Capacity, StrengtheningOneColumnShiftsCapacityToward) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix phi = rng.normal_matrix(2, 2);
    const Vector before = capacity_of(phi);
    phi.col(0) *= 1.0 + rng.uniform(0.01, 3.0);
    const Vector after = capacity_of(phi);
    EXPECT_GE(after(0), before(0) - 1e-14);
    EXPECT_LE(after(1), before(1) + 1e-14);
  }
}

TEST(Capacity, OrthogonalColumnIsExactlyOne) {
  Matrix phi = Matrix::Zero(3, 3);
  phi(0, 0) = 2.5;
  phi(1, 1) = 1.0;
  phi(1, 2) = 0.3;
  phi(2, 2) = 0.7;
  EXPECT_EQ(capacity_of(phi)(0), 1.0);
}

TEST(Capacity, NormalizedEqualsRawOnUnitColumns) {
  Rng rng(5);
  Matrix phi = rng.normal_matrix(4, 7);
  phi.colwise().normalize();
  phi.col(3).setZero();
  const auto r = allocated_capacity(FeatureMatrix(phi));
  EXPECT_LT((r.capacity - r.normalized_capacity).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Capacity, NormalizedIgnoresColumnScaling) {
  Rng rng(8);
  const Matrix phi = rng.normal_matrix(4, 6);
  Matrix scaled = phi;
  for (Index i = 0; i < scaled.cols(); ++i) scaled.col(i) *= rng.uniform(0.1, 10.0);
  EXPECT_LT((normalized_capacity_of(phi) - normalized_capacity_of(scaled)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FeatureMatrixType, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(FeatureMatrix(Matrix(0, 3)), ShapeError);
  Matrix bad = Matrix::Ones(2, 2);
  bad(0, 1) = std::nan("");
  EXPECT_THROW(FeatureMatrix{bad}, ShapeError);
}

TEST(Readout, CoordinateProjection) {
  Vector a = Vector::Zero(4);
  a(2) = 3.0;
  EXPECT_EQ(feature_readout(Vector::Unit(4, 2), a), 3.0);
  EXPECT_EQ(feature_readout(Vector::Zero(4), Vector::Random(4)), 0.0);
}

TEST(Readout, OrthonormalFeaturesAreRecoveredExactly) {
  Rng rng(2);
  Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(5, 5));
  const Matrix q = qr.householderQ();
  const Vector f = rng.normal_vector(5);
  const Vector a = q * f;
  for (Index i = 0; i < 5; ++i) EXPECT_NEAR(feature_readout(q.col(i), a), f(i), 1e-14);
}

TEST(Readout, LengthMismatchThrows) { EXPECT_THROW(feature_readout(Vector::Zero(3), Vector::Zero(4)), ShapeError); }

TEST(Overlap, Examples) {
  EXPECT_TRUE(overlap_matrix(FeatureMatrix(Matrix::Identity(3, 3))).isIdentity());
  const Matrix same = overlap_matrix(FeatureMatrix(mat(2, 2, {0.6, 0.6, 0.8, 0.8})));
  EXPECT_DOUBLE_EQ(same(0, 1), 1.0);
  const Matrix opposite = overlap_matrix(FeatureMatrix(mat(2, 2, {0.6, -0.6, 0.8, -0.8})));
  EXPECT_DOUBLE_EQ(opposite(0, 1), -1.0);
}
