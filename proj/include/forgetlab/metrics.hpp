#ifndef FORGETLAB_METRICS_HPP
#define FORGETLAB_METRICS_HPP

// Per-task metric series over checkpoints and the ratio-based forgetting
// score F.
//
// Task and checkpoint indices are 0-based: checkpoint t is the model right
// after training task t (snapshot t + 1 of a SequenceRun). For a metric M,
//
//   R(i, t) = M(i, t) / M(i, i)
//   F(t)    = mean over i < t of (1 - R(i, t))
//
// Every metric is first averaged over the features associated with task i.

#include <algorithm>
#include <array>
#include <numeric>
#include <string>
#include <vector>

#include "forgetlab/core.hpp"
#include "forgetlab/geometry.hpp"
#include "forgetlab/model.hpp"
#include "forgetlab/tasks.hpp"

namespace forgetlab {

enum class Metric { accuracy, gamma, norm, capacity_norm };

inline constexpr std::array<Metric, 4> kAllMetrics = {Metric::accuracy, Metric::gamma, Metric::norm,
                                                      Metric::capacity_norm};

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::accuracy: return "accuracy";
    case Metric::gamma: return "gamma";
    case Metric::norm: return "norm";
    case Metric::capacity_norm: return "capacity_norm";
  }
  return "?";
}

inline Metric parse_metric(const std::string& s) {
  for (Metric m : kAllMetrics)
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown metric '" + s + "'");
}

struct MetricValues {
  double accuracy = 0.0;       // 1 / (1 + MSE) of the task's probes
  double gamma = 0.0;          // mean |w^T phi_i|
  double norm = 0.0;           // mean |phi_i|
  double capacity_norm = 0.0;  // mean normalized capacity

  double get(Metric m) const {
    switch (m) {
      case Metric::accuracy: return accuracy;
      case Metric::gamma: return gamma;
      case Metric::norm: return norm;
      case Metric::capacity_norm: return capacity_norm;
    }
    return 0.0;
  }
};

class MetricSeries {
 public:
  explicit MetricSeries(int n_tasks = 0)
      : n_tasks_(n_tasks), values_(static_cast<std::size_t>(n_tasks) * static_cast<std::size_t>(n_tasks)),
        present_(values_.size(), false) {}

  int tasks() const { return n_tasks_; }

  void set(int task, int checkpoint, MetricValues v) {
    check(task, checkpoint);
    values_[slot(task, checkpoint)] = v;
    present_[slot(task, checkpoint)] = true;
  }

  const MetricValues& at(int task, int checkpoint) const {
    check(task, checkpoint);
    if (!present_[slot(task, checkpoint)]) {
      throw std::out_of_range("MetricSeries: no value for task " + std::to_string(task) + " at checkpoint " +
                              std::to_string(checkpoint));
    }
    return values_[slot(task, checkpoint)];
  }

  double at(int task, int checkpoint, Metric m) const { return at(task, checkpoint).get(m); }

 private:
  std::size_t slot(int task, int checkpoint) const {
    return static_cast<std::size_t>(task) * static_cast<std::size_t>(n_tasks_) + static_cast<std::size_t>(checkpoint);
  }
  void check(int task, int checkpoint) const {
    if (task < 0 || task >= n_tasks_ || checkpoint < task || checkpoint >= n_tasks_) {
      throw std::out_of_range("MetricSeries: need 0 <= task <= checkpoint < " + std::to_string(n_tasks_));
    }
  }

  int n_tasks_;
  std::vector<MetricValues> values_;
  std::vector<bool> present_;
};

struct ForgettingScore {
  std::vector<double> ratios;  // R(i, t) for i < t
  double value = 0.0;          // F(t)
};

/// Features tracked for a task: its active mask, or, when every feature is
/// active, the |mask| features with the largest max_k |beta_k,i| (lower index
/// wins ties). A positive `count` overrides |mask|.
inline std::vector<Index> associated_features(const TaskSpec& task, Index count = 0) {
  const Index n = task.features();
  const Index want = count > 0 ? std::min(count, n) : task.active_count();
  std::vector<Index> ids;
  if (task.active_count() < n && count <= 0) {
    for (Index i = 0; i < n; ++i)
      if (task.active(i)) ids.push_back(i);
    return ids;
  }
  ids.resize(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), Index{0});
  const Vector strength = task.beta.cwiseAbs().colwise().maxCoeff().transpose();
  std::stable_sort(ids.begin(), ids.end(), [&](Index a, Index b) { return strength(a) > strength(b); });
  ids.resize(static_cast<std::size_t>(want));
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Accuracy of a task's probes on a dataset: 1 / (1 + MSE) for regression,
/// argmax agreement for cross-entropy.
inline double task_accuracy(const Snapshot& snap, const TaskSpec& task, const Dataset& data,
                            LossKind loss = LossKind::mse) {
  const Matrix w = snap.probes().stack(snap.probes().for_task(task.index));
  const Matrix logits = data.features * (snap.features().transpose() * w);
  if (loss == LossKind::mse) {
    const double mse = (logits - data.labels).squaredNorm() / static_cast<double>(logits.size());
    return 1.0 / (1.0 + mse);
  }
  Index correct = 0;
  for (Index s = 0; s < logits.rows(); ++s) {
    Index a = 0, b = 0;
    logits.row(s).maxCoeff(&a);
    data.labels.row(s).maxCoeff(&b);
    correct += (a == b) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

inline MetricValues snapshot_metrics(const Snapshot& snap, const TaskSpec& task, const Dataset& data,
                                     LossKind loss = LossKind::mse, Index features_per_task = 0) {
  const Matrix& phi = snap.features();
  const Matrix w = snap.probes().stack(snap.probes().for_task(task.index));
  const Vector norms = phi.colwise().norm().transpose();
  const Vector cap = normalized_capacity_of(phi);
  const Matrix gamma = (w.transpose() * phi).cwiseAbs();  // K x n
  const std::vector<Index> ids = associated_features(task, features_per_task);
  detail::require(!ids.empty(), "snapshot_metrics: task has no associated features");

  MetricValues v;
  v.accuracy = task_accuracy(snap, task, data, loss);
  for (Index i : ids) {
    v.gamma += gamma.col(i).mean();
    v.norm += norms(i);
    v.capacity_norm += cap(i);
  }
  const double inv = 1.0 / static_cast<double>(ids.size());
  v.gamma *= inv;
  v.norm *= inv;
  v.capacity_norm *= inv;
  return v;
}

/// `snapshots` holds the initial state followed by one snapshot per task.
inline MetricSeries compute_metric_series(const std::vector<Snapshot>& snapshots, const std::vector<TaskSpec>& tasks,
                                          const std::vector<Dataset>& eval_data, LossKind loss = LossKind::mse,
                                          Index features_per_task = 0) {
  const int n = static_cast<int>(tasks.size());
  if (static_cast<int>(eval_data.size()) < n) {
    throw std::invalid_argument("compute_metric_series: missing evaluation dataset for task " +
                                std::to_string(eval_data.size()));
  }
  detail::require(static_cast<int>(snapshots.size()) == n + 1,
                  "compute_metric_series: need one snapshot per task plus the initial state");
  MetricSeries series(n);
  for (int t = 0; t < n; ++t) {
    const Snapshot& snap = snapshots[static_cast<std::size_t>(t) + 1];
    for (int i = 0; i <= t; ++i) {
      series.set(i, t, snapshot_metrics(snap, tasks[i], eval_data[i], loss, features_per_task));
    }
  }
  return series;
}

/// Forgetting of `metric` at checkpoint t (0-based, t >= 1).
inline ForgettingScore forgetting(const MetricSeries& series, Metric metric, int t) {
  if (t < 1 || t >= series.tasks()) {
    throw std::out_of_range("forgetting: checkpoint must satisfy 1 <= t < " + std::to_string(series.tasks()));
  }
  ForgettingScore score;
  double sum = 0.0;
  for (int i = 0; i < t; ++i) {
    const double base = series.at(i, i, metric);
    if (base == 0.0) {
      throw std::domain_error("forgetting: " + to_string(metric) + " of task " + std::to_string(i) +
                              " is zero right after training; ratio undefined");
    }
    const double r = series.at(i, t, metric) / base;
    score.ratios.push_back(r);
    sum += 1.0 - r;
  }
  score.value = sum / static_cast<double>(t);
  return score;
}

}  // namespace forgetlab

#endif  // FORGETLAB_METRICS_HPP
