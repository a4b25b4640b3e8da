#include <gtest/gtest.h>

#include "forgetlab/metrics.hpp"

using namespace forgetlab;

namespace {

MetricSeries constant_series(int n, double v) {
  MetricSeries s(n);
  for (int t = 0; t < n; ++t)
    for (int i = 0; i <= t; ++i) s.set(i, t, {v, v, v, v});
  return s;
}

}  // namespace

TEST(Forgetting, NoChangeIsZero) {
  const auto s = constant_series(4, 0.7);
  for (Metric m : kAllMetrics) EXPECT_EQ(forgetting(s, m, 3).value, 0.0);
}

TEST(Forgetting, CompleteLossIsOne) {
  MetricSeries s(3);
  for (int i = 0; i < 3; ++i) s.set(i, i, {0.9, 0.9, 0.9, 0.9});
  for (int i = 0; i < 2; ++i) s.set(i, 2, {0, 0, 0, 0});
  s.set(0, 1, {0.5, 0.5, 0.5, 0.5});
  EXPECT_EQ(forgetting(s, Metric::accuracy, 2).value, 1.0);
}

TEST(Forgetting, GrowthIsNegative) {
  MetricSeries s(2);
  s.set(0, 0, {2.0, 2.0, 2.0, 2.0});
  s.set(1, 1, {1.0, 1.0, 1.0, 1.0});
  s.set(0, 1, {3.0, 3.0, 3.0, 3.0});
  EXPECT_DOUBLE_EQ(forgetting(s, Metric::norm, 1).value, -0.5);
}

TEST(Forgetting, RatioAndMeanProperties) {
  MetricSeries s(4), scaled(4);
  const double vals[4][4] = {{1.0, 0.8, 0.6, 0.3}, {0, 2.0, 1.5, 1.9}, {0, 0, 0.5, 0.1}, {0, 0, 0, 1.0}};
  for (int i = 0; i < 4; ++i)
    for (int t = i; t < 4; ++t) {
      const double v = vals[i][t];
      s.set(i, t, {v, v, v, v});
      const double k = 3.0 + i;
      scaled.set(i, t, {k * v, k * v, k * v, k * v});
    }
  const auto f = forgetting(s, Metric::gamma, 3);
  EXPECT_NEAR(f.value, forgetting(scaled, Metric::gamma, 3).value, 1e-15);
  double mean = 0.0;
  for (double r : f.ratios) mean += 1.0 - r;
  EXPECT_NEAR(f.value, mean / 3.0, 1e-15);
  EXPECT_NEAR(f.value, ((1 - 0.3) + (1 - 1.9 / 2.0) + (1 - 0.1 / 0.5)) / 3.0, 1e-15);
}

TEST(Forgetting, RejectsBadCheckpointAndZeroBaseline) {
  const auto s = constant_series(3, 1.0);
  EXPECT_THROW(forgetting(s, Metric::accuracy, 0), std::out_of_range);
  EXPECT_THROW(forgetting(s, Metric::accuracy, 3), std::out_of_range);
  const auto z = constant_series(3, 0.0);
  EXPECT_THROW(forgetting(z, Metric::accuracy, 2), std::domain_error);
}

TEST(MetricSeriesType, MissingEntryThrows) {
  MetricSeries s(3);
  EXPECT_THROW(s.at(0, 1), std::out_of_range);
  EXPECT_THROW(s.set(2, 1, {}), std::out_of_range);
}

TEST(Association, MaskOrStrongestContributions) {
  const auto none = make_task_sequence(Scenario::none, 4, 12, 0);
  const auto ids = associated_features(none[2]);
  ASSERT_EQ(ids.size(), 3u);
  EXPECT_EQ(ids[0], 6);
  TaskSpec t;
  t.beta = Matrix(1, 5);
  t.beta << 0.1, -3.0, 2.0, 2.0, 0.5;
  t.active = Mask::Constant(5, true);
  const auto top = associated_features(t, 2);
  EXPECT_EQ(top, (std::vector<Index>{1, 2}));
}

TEST(SeriesFromSnapshots, UntouchedFeaturesKeepNorm) {
  SequenceConfig cfg;
  cfg.scenario = Scenario::none;
  cfg.n_features = 12;
  cfg.m_dims = 4;
  cfg.n_tasks = 3;
  cfg.n_samples = 200;
  cfg.eval_samples = 100;
  cfg.train.epochs = 200;
  const SequenceRun run = train_sequence(cfg);
  const MetricSeries s = compute_metric_series(run.snapshots, run.tasks, run.eval_data);
  EXPECT_DOUBLE_EQ(s.at(0, 2).norm, s.at(0, 0).norm);
  EXPECT_DOUBLE_EQ(forgetting(s, Metric::norm, 2).ratios[0], 1.0);
}

TEST(SeriesFromSnapshots, ConvergedTaskHasUnitAccuracy) {
  SequenceConfig cfg;
  cfg.n_features = 6;
  cfg.m_dims = 6;
  cfg.n_tasks = 1;
  cfg.n_samples = 300;
  cfg.eval_samples = 300;
  cfg.sparsity = 0.3;
  cfg.train.epochs = 4000;
  const SequenceRun run = train_sequence(cfg);
  const MetricSeries s = compute_metric_series(run.snapshots, run.tasks, run.eval_data);
  EXPECT_NEAR(s.at(0, 0).accuracy, 1.0, 1e-5);
}

TEST(SeriesFromSnapshots, OrthonormalSnapshotHasUnitCapacity) {
  Rng rng(4);
  Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(6, 6));
  const Matrix q = qr.householderQ();
  ProbeBank bank;
  bank.add({rng.normal_vector(6), 0, true});
  const Snapshot snap(0, Encoder({Matrix(q * 2.0)}), bank);
  const auto tasks = make_task_sequence(Scenario::full, 1, 6, 4);
  const auto v = snapshot_metrics(snap, tasks[0], sample_dataset(tasks[0], 50, 0.5, 4));
  EXPECT_NEAR(v.capacity_norm, 1.0, 1e-12);
  EXPECT_NEAR(v.norm, 2.0, 1e-12);
}

TEST(SeriesFromSnapshots, CapacityForgettingIgnoresFading) {
  Rng rng(5);
  const Matrix phi = rng.normal_matrix(3, 6);
  Matrix faded = phi;
  faded.col(0) *= 0.1;
  faded.col(4) *= 7.0;
  ProbeBank bank;
  bank.add({rng.normal_vector(3), 0, true});
  const auto tasks = make_task_sequence(Scenario::full, 1, 6, 5);
  const Dataset d = sample_dataset(tasks[0], 50, 0.5, 5);
  const auto a = snapshot_metrics(Snapshot(0, Encoder({phi}), bank), tasks[0], d);
  const auto b = snapshot_metrics(Snapshot(0, Encoder({faded}), bank), tasks[0], d);
  EXPECT_NEAR(a.capacity_norm, b.capacity_norm, 1e-14);
  EXPECT_NE(a.norm, b.norm);
}
