#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "forgetlab/tasks.hpp"

using namespace forgetlab;

TEST(TaskSequence, NoneHasDisjointBlocksOfSixteen) {
  const auto tasks = make_task_sequence(Scenario::none, 5, 80, 0);
  ASSERT_EQ(tasks.size(), 5u);
  for (std::size_t a = 0; a < tasks.size(); ++a) {
    EXPECT_EQ(tasks[a].active_count(), 16);
    for (Index i = 0; i < 80; ++i)
      if (!tasks[a].active(i)) {
        EXPECT_EQ(tasks[a].beta.col(i).norm(), 0.0);
      }
    for (std::size_t b = a + 1; b < tasks.size(); ++b) EXPECT_FALSE((tasks[a].active && tasks[b].active).any());
  }
}

TEST(TaskSequence, FullActivatesEverything) {
  for (const auto& t : make_task_sequence(Scenario::full, 5, 80, 0)) EXPECT_TRUE(t.active.all());
}

TEST(TaskSequence, DeterministicInSeed) {
  const auto a = make_task_sequence(Scenario::full, 3, 12, 42, 2);
  const auto b = make_task_sequence(Scenario::full, 3, 12, 42, 2);
  const auto c = make_task_sequence(Scenario::full, 3, 12, 43, 2);
  for (std::size_t t = 0; t < a.size(); ++t) EXPECT_EQ(a[t].beta, b[t].beta);
  EXPECT_NE(a[0].beta, c[0].beta);
  EXPECT_EQ(a[0].outputs(), 2);
}

TEST(TaskSequence, NoneRejectsUnevenSplit) {
  EXPECT_THROW(make_task_sequence(Scenario::none, 3, 80, 0), ShapeError);
}

TEST(Sampling, SparsityRateAndNonnegativity) {
  const auto t = make_task_sequence(Scenario::full, 1, 80, 1)[0];
  const Dataset d = sample_dataset(t, 20000, 0.9, 1);
  EXPECT_TRUE((d.features.array() >= 0.0).all());
  const double nonzero = (d.features.array() > 0.0).cast<double>().mean();
  EXPECT_NEAR(nonzero, 0.10, 0.02);
}

TEST(Sampling, LabelsAreLinearInFeatures) {
  const auto t = make_task_sequence(Scenario::full, 1, 10, 2, 3)[0];
  const Dataset d = sample_dataset(t, 500, 0.5, 2);
  EXPECT_LT((d.labels - d.features * t.beta.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Sampling, ZeroBetaAndEmptyMask) {
  auto t = make_task_sequence(Scenario::full, 1, 6, 3)[0];
  t.beta.setZero();
  EXPECT_EQ(sample_dataset(t, 100, 0.5, 0).labels.norm(), 0.0);
  t = make_task_sequence(Scenario::full, 1, 6, 3)[0];
  t.active.setConstant(false);
  const Dataset d = sample_dataset(t, 100, 0.5, 0);
  EXPECT_EQ(d.features.norm(), 0.0);
  EXPECT_EQ(d.labels.norm(), 0.0);
}

TEST(Stats, SingleSample) {
  Matrix f = Matrix::Zero(1, 4);
  f(0, 0) = 1.0;
  const FeatureStats s = estimate_stats(f, Matrix::Constant(1, 1, 2.0));
  EXPECT_EQ(s.sigma(0, 0), 1.0);
  EXPECT_EQ(s.beta(0)(0), 2.0);
  EXPECT_EQ(s.sigma.sum(), 1.0);
  EXPECT_EQ(s.beta(0).sum(), 2.0);
}

TEST(Stats, MomentsOfMaskedUniformGenerator) {
  // E[f_i f_j] = ((1 - s) / 2)^2 for i != j and (1 - s) / 3 on the diagonal.
  const auto t = make_task_sequence(Scenario::full, 1, 8, 4)[0];
  const FeatureStats s = estimate_stats(sample_dataset(t, 20000, 0.9, 4));
  const double off = 0.0025, diag = 0.1 / 3.0;
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j) EXPECT_NEAR(s.sigma(i, j), i == j ? diag : off, 0.3 * (i == j ? diag : off));
}

TEST(Stats, SymmetricPsdAndPermutationInvariant) {
  const auto t = make_task_sequence(Scenario::full, 1, 12, 5, 2)[0];
  const Dataset d = sample_dataset(t, 400, 0.7, 5);
  const FeatureStats s = estimate_stats(d);
  EXPECT_LT((s.sigma - s.sigma.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s.sigma);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-8);

  std::vector<Index> perm(400);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::reverse(perm.begin(), perm.end());
  Matrix f(400, 12), y(400, 2);
  for (Index k = 0; k < 400; ++k) {
    f.row(k) = d.features.row(perm[k]);
    y.row(k) = d.labels.row(perm[k]);
  }
  const FeatureStats p = estimate_stats(f, y);
  EXPECT_LT((p.sigma - s.sigma).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((p.beta_hat - s.beta_hat).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Stats, DisjointTasksHaveZeroCrossMoments) {
  const auto tasks = make_task_sequence(Scenario::none, 4, 12, 6);
  const FeatureStats sb = estimate_stats(sample_dataset(tasks[1], 300, 0.5, 6));
  for (Index i = 0; i < 12; ++i) {
    if (tasks[1].active(i)) continue;
    EXPECT_EQ(sb.sigma.row(i).norm(), 0.0);
    EXPECT_EQ(sb.beta(0)(i), 0.0);
  }
}

TEST(Stats, ScaleLabels) {
  const auto t = make_task_sequence(Scenario::full, 1, 5, 7)[0];
  const FeatureStats s = estimate_stats(sample_dataset(t, 100, 0.5, 7));
  const FeatureStats u = scale_labels(s, 1.0 / std::sqrt(s.label_second_moment(0)));
  EXPECT_NEAR(u.label_second_moment(0), 1.0, 1e-14);
  EXPECT_EQ(u.sigma, s.sigma);
}
