#ifndef FORGETLAB_TASKS_HPP
#define FORGETLAB_TASKS_HPP

// Synthetic continual-learning task sequences.
//
// Each task owns one contribution vector per output (probe) and a mask of
// features allowed to activate. Activations are masked-uniform: every
// feature is 0 with probability `sparsity`, otherwise Uniform[0, 1]. Labels
// are exactly linear in the activations, y_k = beta_k^T f.

#include <cstdint>
#include <string>
#include <vector>

#include "forgetlab/core.hpp"
#include "forgetlab/random.hpp"

namespace forgetlab {

enum class Scenario { full, none };

inline std::string to_string(Scenario s) { return s == Scenario::full ? "full" : "none"; }

inline Scenario parse_scenario(const std::string& s) {
  if (s == "full") return Scenario::full;
  if (s == "none") return Scenario::none;
  throw std::invalid_argument("unknown scenario '" + s + "' (expected full|none)");
}

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

struct TaskSpec {
  int index = 0;
  Matrix beta;  // outputs x n
  Mask active;  // length n

  Index features() const { return beta.cols(); }
  Index outputs() const { return beta.rows(); }
  Vector contribution(Index output = 0) const { return beta.row(output).transpose(); }
  Index active_count() const { return active.count(); }
};

struct ActivationSample {
  Vector f;
  Vector y;
};

/// Row s of `features` and `labels` is one sample.
struct Dataset {
  Matrix features;  // N x n
  Matrix labels;    // N x outputs

  Index size() const { return features.rows(); }
  ActivationSample sample(Index s) const {
    return {features.row(s).transpose(), labels.row(s).transpose()};
  }
};

/// Empirical second moments of a dataset. With these, full-batch gradient
/// expressions written in terms of expectations hold exactly on that data.
struct FeatureStats {
  Matrix sigma;                // n x n, E[f f^T]
  Matrix beta_hat;             // n x outputs, E[y_k f]
  Vector label_second_moment;  // per output, E[y_k^2]
  Index sample_count = 0;

  Vector beta(Index output = 0) const { return beta_hat.col(output); }
};

inline std::vector<TaskSpec> make_task_sequence(Scenario scenario, int n_tasks,
                                                int n_features, std::uint64_t seed,
                                                int outputs_per_task = 1) {
  detail::require(n_tasks >= 1, "make_task_sequence: n_tasks must be >= 1");
  detail::require(n_features >= 1, "make_task_sequence: n_features must be >= 1");
  detail::require(outputs_per_task >= 1, "make_task_sequence: outputs_per_task must be >= 1");
  if (scenario == Scenario::none && n_features % n_tasks != 0) {
    throw ShapeError("make_task_sequence: 'none' needs n_features (" +
                     std::to_string(n_features) + ") divisible by n_tasks (" +
                     std::to_string(n_tasks) + ")");
  }
  Rng rng(seed, 0x7a5c);
  const int block = n_features / n_tasks;
  std::vector<TaskSpec> tasks;
  tasks.reserve(n_tasks);
  for (int t = 0; t < n_tasks; ++t) {
    TaskSpec task;
    task.index = t;
    task.active = Mask::Constant(n_features, scenario == Scenario::full);
    if (scenario == Scenario::none) task.active.segment(t * block, block).setConstant(true);
    task.beta = rng.normal_matrix(outputs_per_task, n_features);
    for (Index i = 0; i < n_features; ++i) {
      if (!task.active(i)) task.beta.col(i).setZero();
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

inline Dataset sample_dataset(const TaskSpec& task, Index n_samples, double sparsity,
                              std::uint64_t seed) {
  detail::require(n_samples > 0, "sample_dataset: n_samples must be positive");
  detail::require(sparsity >= 0.0 && sparsity < 1.0, "sample_dataset: sparsity must be in [0, 1)");
  Rng rng(seed, 0xda7a + static_cast<std::uint64_t>(task.index));
  const Index n = task.features();
  Dataset d;
  d.features = Matrix::Zero(n_samples, n);
  for (Index s = 0; s < n_samples; ++s) {
    for (Index i = 0; i < n; ++i) {
      const double keep = rng.uniform();
      const double value = rng.uniform();
      if (keep >= sparsity && task.active(i)) d.features(s, i) = value;
    }
  }
  d.labels = d.features * task.beta.transpose();
  return d;
}

inline FeatureStats estimate_stats(const Matrix& features, const Matrix& labels) {
  detail::require(features.rows() > 0, "estimate_stats: empty dataset");
  detail::require(features.rows() == labels.rows(), "estimate_stats: row count mismatch");
  const double inv = 1.0 / static_cast<double>(features.rows());
  FeatureStats s;
  s.sigma = (features.transpose() * features) * inv;
  s.sigma = 0.5 * (s.sigma + s.sigma.transpose()).eval();
  s.beta_hat = (features.transpose() * labels) * inv;
  s.label_second_moment = labels.colwise().squaredNorm().transpose() * inv;
  s.sample_count = features.rows();
  return s;
}

inline FeatureStats estimate_stats(const Dataset& d) { return estimate_stats(d.features, d.labels); }

/// Stats of the same data with every label scaled by `scale`.
inline FeatureStats scale_labels(FeatureStats s, double scale) {
  s.beta_hat *= scale;
  s.label_second_moment *= scale * scale;
  return s;
}

}  // namespace forgetlab

#endif  // FORGETLAB_TASKS_HPP
