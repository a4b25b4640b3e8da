#ifndef FORGETLAB_MODEL_HPP
#define FORGETLAB_MODEL_HPP

// The feature-reader model: y_hat = w^T Phi f, where Phi may be factored
// through a deep linear encoder Phi = L_d ... L_1, and w is a task probe.

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "forgetlab/core.hpp"
#include "forgetlab/optim.hpp"
#include "forgetlab/random.hpp"
#include "forgetlab/tasks.hpp"

namespace forgetlab {

enum class LossKind { mse, cross_entropy };
enum class ProbeMode { fixed, coadapt };

inline std::string to_string(LossKind k) { return k == LossKind::mse ? "mse" : "cross_entropy"; }
inline std::string to_string(ProbeMode p) { return p == ProbeMode::fixed ? "fixed" : "coadapt"; }

inline LossKind parse_loss(const std::string& s) {
  if (s == "mse") return LossKind::mse;
  if (s == "cross_entropy" || s == "ce") return LossKind::cross_entropy;
  throw std::invalid_argument("unknown loss '" + s + "' (expected mse|cross_entropy)");
}

inline ProbeMode parse_probe_mode(const std::string& s) {
  if (s == "fixed") return ProbeMode::fixed;
  if (s == "coadapt") return ProbeMode::coadapt;
  throw std::invalid_argument("unknown probe mode '" + s + "' (expected fixed|coadapt)");
}

class Encoder {
 public:
  Encoder() = default;

  explicit Encoder(std::vector<Matrix> layers) : layers_(std::move(layers)) {
    detail::require(!layers_.empty(), "Encoder: need at least one layer");
    for (std::size_t k = 1; k < layers_.size(); ++k) {
      detail::require(layers_[k].cols() == layers_[k - 1].rows(),
                      "Encoder: layer " + std::to_string(k) + " has shape " +
                          detail::shape_str(layers_[k].rows(), layers_[k].cols()) +
                          " but previous layer outputs " + std::to_string(layers_[k - 1].rows()));
    }
  }

  /// Gaussian init with stddev 1/sqrt(fan_in); hidden width max(m, n).
  static Encoder random(Index m, Index n, int depth, Rng& rng) {
    detail::require(depth >= 1, "Encoder::random: depth must be >= 1");
    const Index h = std::max(m, n);
    std::vector<Matrix> layers;
    Index in = n;
    for (int k = 0; k < depth; ++k) {
      const Index out = (k + 1 == depth) ? m : h;
      layers.push_back(rng.normal_matrix(out, in, 1.0 / std::sqrt(static_cast<double>(in))));
      in = out;
    }
    return Encoder(std::move(layers));
  }

  int depth() const { return static_cast<int>(layers_.size()); }
  Index dims() const { return layers_.back().rows(); }
  Index features() const { return layers_.front().cols(); }

  /// Phi = L_d ... L_1 (m x n).
  Matrix product() const {
    Matrix p = layers_.front();
    for (std::size_t k = 1; k < layers_.size(); ++k) p = layers_[k] * p;
    return p;
  }

  /// Phi e_i: where feature i lands in activation space.
  Vector effective_feature(Index i) const {
    Vector v = layers_.front().col(i);
    for (std::size_t k = 1; k < layers_.size(); ++k) v = layers_[k] * v;
    return v;
  }

  std::vector<Matrix>& layers() { return layers_; }
  const std::vector<Matrix>& layers() const { return layers_; }

 private:
  std::vector<Matrix> layers_;
};

struct Probe {
  ReadoutVector w;
  int task = 0;
  bool fixed = true;
};

class ProbeBank {
 public:
  ProbeBank() = default;
  explicit ProbeBank(std::vector<Probe> probes) : probes_(std::move(probes)) {}

  void add(Probe p) { probes_.push_back(std::move(p)); }
  std::size_t size() const { return probes_.size(); }
  Probe& operator[](std::size_t i) { return probes_[i]; }
  const Probe& operator[](std::size_t i) const { return probes_[i]; }
  const std::vector<Probe>& probes() const { return probes_; }

  std::vector<int> for_task(int task) const {
    std::vector<int> ids;
    for (std::size_t i = 0; i < probes_.size(); ++i) {
      if (probes_[i].task == task) ids.push_back(static_cast<int>(i));
    }
    return ids;
  }

  /// Probes of all tasks up to and including `task`, in bank order.
  std::vector<int> up_to_task(int task) const {
    std::vector<int> ids;
    for (std::size_t i = 0; i < probes_.size(); ++i) {
      if (probes_[i].task <= task) ids.push_back(static_cast<int>(i));
    }
    return ids;
  }

  /// m x K matrix with the selected probes as columns.
  Matrix stack(const std::vector<int>& ids) const {
    detail::require(!ids.empty(), "ProbeBank::stack: no probes selected");
    Matrix w(probes_[ids.front()].w.size(), static_cast<Index>(ids.size()));
    for (std::size_t k = 0; k < ids.size(); ++k) w.col(static_cast<Index>(k)) = probes_[ids[k]].w;
    return w;
  }

 private:
  std::vector<Probe> probes_;
};

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 0.01;
  int epochs = 1000;
  double weight_decay = 0.0;
  LossKind loss = LossKind::mse;
  ProbeMode probe_mode = ProbeMode::fixed;
  double probe_lr = 0.01;
  /// Train against every probe seen so far, with zero targets for old ones.
  bool shared_heads = false;
  AdamParams adam;
};

/// Heads used by a loss and their per-sample targets (N x heads).
struct HeadTargets {
  std::vector<int> heads;
  Matrix targets;
};

/// Loss value and gradients with respect to every layer, Phi, and the heads.
struct Gradients {
  double loss = 0.0;
  std::vector<Matrix> layers;
  Matrix phi;    // m x n
  Matrix heads;  // m x K
};

namespace detail {

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Index s = 0; s < logits.rows(); ++s) {
    const double mx = logits.row(s).maxCoeff();
    p.row(s) = (logits.row(s).array() - mx).exp().matrix();
    p.row(s) /= p.row(s).sum();
  }
  return p;
}

inline Matrix one_hot_argmax(const Matrix& scores) {
  Matrix t = Matrix::Zero(scores.rows(), scores.cols());
  for (Index s = 0; s < scores.rows(); ++s) {
    Index best = 0;
    scores.row(s).maxCoeff(&best);
    t(s, best) = 1.0;
  }
  return t;
}

}  // namespace detail

/// y_hat = w^T (L_d ... L_1) f
inline double forward(const Encoder& enc, const ReadoutVector& w, const Vector& f) {
  detail::require(f.size() == enc.features(), "forward: activation length " + std::to_string(f.size()) +
                                                  " != features " + std::to_string(enc.features()));
  detail::require(w.size() == enc.dims(), "forward: probe length " + std::to_string(w.size()) +
                                              " != dims " + std::to_string(enc.dims()));
  Vector a = f;
  for (const Matrix& l : enc.layers()) a = l * a;
  return w.dot(a);
}

/// Softmax over the logits w_c^T Phi f for each column w_c of `heads`.
inline Vector cross_entropy_forward(const Encoder& enc, const Matrix& heads, const Vector& f) {
  detail::require(heads.cols() >= 2, "cross_entropy_forward: need at least two classes");
  detail::require(heads.rows() == enc.dims(), "cross_entropy_forward: head length mismatch");
  detail::require(f.size() == enc.features(), "cross_entropy_forward: activation length mismatch");
  Vector a = f;
  for (const Matrix& l : enc.layers()) a = l * a;
  const Matrix logits = (heads.transpose() * a).transpose();
  return detail::softmax_rows(logits).row(0).transpose();
}

/// Full-batch loss and gradients. MSE is 1/2 sum_k (z_k - t_k)^2 and CE is
/// -sum_k t_k log softmax(z)_k, both averaged over samples.
inline Gradients loss_and_gradients(const Encoder& enc, const Matrix& heads, const Matrix& features,
                                    const Matrix& targets, LossKind loss) {
  detail::require(features.cols() == enc.features(), "loss_and_gradients: feature count mismatch");
  detail::require(heads.rows() == enc.dims(), "loss_and_gradients: head length mismatch");
  detail::require(targets.rows() == features.rows() && targets.cols() == heads.cols(),
                  "loss_and_gradients: targets must be N x K");
  const auto& layers = enc.layers();
  const int d = enc.depth();
  const double inv_n = 1.0 / static_cast<double>(features.rows());

  // prefix[k] = L_k ... L_1, prefix[0] unused (identity)
  std::vector<Matrix> prefix(static_cast<std::size_t>(d) + 1);
  prefix[1] = layers[0];
  for (int k = 2; k <= d; ++k) prefix[k] = layers[k - 1] * prefix[k - 1];
  const Matrix& phi = prefix[d];

  const Matrix logits = features * (phi.transpose() * heads);  // N x K
  Matrix residual;
  Gradients g;
  if (loss == LossKind::mse) {
    residual = logits - targets;
    g.loss = 0.5 * residual.squaredNorm() * inv_n;
  } else {
    const Matrix p = detail::softmax_rows(logits);
    double l = 0.0;
    for (Index s = 0; s < p.rows(); ++s)
      for (Index c = 0; c < p.cols(); ++c)
        if (targets(s, c) != 0.0) l -= targets(s, c) * std::log(std::max(p(s, c), 1e-300));
    g.loss = l * inv_n;
    residual = p - targets;
  }
  residual *= inv_n;

  const Matrix rf = residual.transpose() * features;  // K x n
  g.phi = heads * rf;                                  // m x n
  g.heads = phi * rf.transpose();                      // m x K

  g.layers.resize(static_cast<std::size_t>(d));
  Matrix back = g.phi;  // (L_d ... L_{k+1})^T dPhi
  for (int k = d; k >= 1; --k) {
    if (k == 1) {
      g.layers[0] = back;
    } else {
      g.layers[k - 1] = back * prefix[k - 1].transpose();
      back = layers[k - 1].transpose() * back;
    }
  }
  return g;
}

inline double evaluate_loss(const Encoder& enc, const Matrix& heads, const Matrix& features,
                            const Matrix& targets, LossKind loss) {
  const Matrix phi = enc.product();
  const Matrix logits = features * (phi.transpose() * heads);
  if (loss == LossKind::mse) return 0.5 * (logits - targets).squaredNorm() / static_cast<double>(features.rows());
  const Matrix p = detail::softmax_rows(logits);
  double l = 0.0;
  for (Index s = 0; s < p.rows(); ++s)
    for (Index c = 0; c < p.cols(); ++c)
      if (targets(s, c) != 0.0) l -= targets(s, c) * std::log(std::max(p(s, c), 1e-300));
  return l / static_cast<double>(features.rows());
}

/// Heads and targets for training on `task`. Without shared heads only the
/// task's own probes are used. With shared heads every earlier probe is
/// included and receives zero targets. Cross-entropy targets are one-hot at
/// the argmax of the task's regression labels.
inline HeadTargets make_head_targets(const ProbeBank& bank, const TaskSpec& task, const Dataset& data,
                                     LossKind loss, bool shared_heads) {
  const std::vector<int> own = bank.for_task(task.index);
  detail::require(!own.empty(), "make_head_targets: task " + std::to_string(task.index) + " has no probe");
  detail::require(static_cast<Index>(own.size()) == data.labels.cols(),
                  "make_head_targets: probe count does not match label columns");
  Matrix own_targets = data.labels;
  if (loss == LossKind::cross_entropy) {
    if (!shared_heads) {
      detail::require(own.size() >= 2, "make_head_targets: cross-entropy needs >= 2 probes per task");
    }
    own_targets = detail::one_hot_argmax(data.labels);
  }
  HeadTargets ht;
  if (!shared_heads) {
    ht.heads = own;
    ht.targets = std::move(own_targets);
    return ht;
  }
  ht.heads = bank.up_to_task(task.index);
  ht.targets = Matrix::Zero(data.size(), static_cast<Index>(ht.heads.size()));
  for (std::size_t k = 0; k < ht.heads.size(); ++k) {
    auto it = std::find(own.begin(), own.end(), ht.heads[k]);
    if (it != own.end()) ht.targets.col(static_cast<Index>(k)) = own_targets.col(it - own.begin());
  }
  return ht;
}

/// Stepwise full-batch trainer over one task. Optimizer state lives here, so
/// a fresh trainer per task resets Adam moments.
class TaskTrainer {
 public:
  TaskTrainer(Encoder& enc, ProbeBank& bank, HeadTargets heads, const Matrix& features, TrainConfig cfg)
      : enc_(enc), bank_(bank), ht_(std::move(heads)), features_(features), cfg_(cfg), adam_(cfg.adam) {
    detail::require(cfg_.learning_rate > 0.0, "TrainConfig: learning_rate must be positive");
    detail::require(cfg_.weight_decay >= 0.0, "TrainConfig: weight_decay must be nonnegative");
    for (int id : ht_.heads) {
      if (cfg_.probe_mode == ProbeMode::coadapt && !bank_[id].fixed) trainable_heads_.push_back(id);
    }
  }

  double loss() const {
    return evaluate_loss(enc_, bank_.stack(ht_.heads), features_, ht_.targets, cfg_.loss);
  }

  /// One full-batch update. Returns the loss before the update.
  double step() {
    const Matrix heads = bank_.stack(ht_.heads);
    Gradients g = loss_and_gradients(enc_, heads, features_, ht_.targets, cfg_.loss);
    if (!std::isfinite(g.loss)) throw DivergenceError("training diverged: loss is " + std::to_string(g.loss));

    std::vector<Matrix*> params;
    std::vector<const Matrix*> grads;
    std::vector<double> lrs;
    for (std::size_t k = 0; k < enc_.layers().size(); ++k) {
      params.push_back(&enc_.layers()[k]);
      grads.push_back(&g.layers[k]);
      lrs.push_back(cfg_.learning_rate);
    }
    std::vector<Matrix> head_params;
    std::vector<Matrix> head_grads;
    head_params.reserve(trainable_heads_.size());
    head_grads.reserve(trainable_heads_.size());
    for (int id : trainable_heads_) {
      const auto pos = std::find(ht_.heads.begin(), ht_.heads.end(), id) - ht_.heads.begin();
      head_params.emplace_back(bank_[id].w);
      head_grads.emplace_back(g.heads.col(pos));
    }
    for (std::size_t k = 0; k < head_params.size(); ++k) {
      params.push_back(&head_params[k]);
      grads.push_back(&head_grads[k]);
      lrs.push_back(cfg_.probe_lr);
    }

    if (cfg_.optimizer == OptimizerKind::adam) {
      adam_.step(params, grads, lrs);
    } else {
      for (std::size_t k = 0; k < params.size(); ++k) *params[k] -= lrs[k] * *grads[k];
    }
    if (cfg_.weight_decay > 0.0) {
      for (std::size_t k = 0; k < params.size(); ++k) *params[k] *= (1.0 - lrs[k] * cfg_.weight_decay);
    }
    for (std::size_t k = 0; k < trainable_heads_.size(); ++k) bank_[trainable_heads_[k]].w = head_params[k];

    for (const Matrix& l : enc_.layers()) {
      if (!l.allFinite()) throw DivergenceError("training diverged: non-finite encoder weight");
    }
    for (int id : trainable_heads_) {
      if (!bank_[id].w.allFinite()) throw DivergenceError("training diverged: non-finite probe weight");
    }
    return g.loss;
  }

 private:
  Encoder& enc_;
  ProbeBank& bank_;
  HeadTargets ht_;
  const Matrix& features_;
  TrainConfig cfg_;
  Adam adam_;
  std::vector<int> trainable_heads_;
};

/// trace[e] is the loss before epoch e's update; the last entry is the loss
/// after the final update.
struct TrainingTrace {
  std::vector<double> loss;
};

inline TrainingTrace train_task(Encoder& enc, ProbeBank& bank, const TaskSpec& task, const Dataset& data,
                                const TrainConfig& cfg) {
  detail::require(cfg.epochs >= 1, "train_task: epochs must be >= 1");
  TaskTrainer trainer(enc, bank, make_head_targets(bank, task, data, cfg.loss, cfg.shared_heads),
                      data.features, cfg);
  TrainingTrace trace;
  trace.loss.reserve(static_cast<std::size_t>(cfg.epochs) + 1);
  for (int e = 0; e < cfg.epochs; ++e) trace.loss.push_back(trainer.step());
  trace.loss.push_back(trainer.loss());
  return trace;
}

/// Frozen model state after a task (task_index -1 is the initial state).
class Snapshot {
 public:
  Snapshot(int task_index, Encoder encoder, ProbeBank probes, FeatureStats stats = {})
      : task_index_(task_index), encoder_(std::move(encoder)), probes_(std::move(probes)),
        stats_(std::move(stats)), phi_(encoder_.product()) {}

  int task_index() const { return task_index_; }
  const Encoder& encoder() const { return encoder_; }
  const ProbeBank& probes() const { return probes_; }
  const FeatureStats& stats() const { return stats_; }
  /// Effective feature vectors (product of all encoder layers).
  const Matrix& features() const { return phi_; }

 private:
  int task_index_;
  Encoder encoder_;
  ProbeBank probes_;
  FeatureStats stats_;
  Matrix phi_;
};

struct SequenceConfig {
  Scenario scenario = Scenario::full;
  int n_features = 80;
  int m_dims = 20;
  int n_tasks = 5;
  Index n_samples = 20000;
  Index eval_samples = 2000;
  double sparsity = 0.9;
  int depth = 1;
  int probes_per_task = 1;
  /// Probes start as N(0, scale^2 / m).
  double probe_init_scale = 1.0;
  bool probes_share_label = false;
  TrainConfig train;
  std::uint64_t seed = 0;
};

struct SequenceRun {
  std::vector<TaskSpec> tasks;
  std::vector<Dataset> train_data;
  std::vector<Dataset> eval_data;
  std::vector<Snapshot> snapshots;  // initial state, then one per task
  std::vector<TrainingTrace> traces;
};

inline SequenceRun train_sequence(const SequenceConfig& cfg) {
  SequenceRun run;
  run.tasks = make_task_sequence(cfg.scenario, cfg.n_tasks, cfg.n_features, cfg.seed, cfg.probes_per_task);
  if (cfg.probes_share_label)
    for (TaskSpec& t : run.tasks)
      for (Index k = 1; k < t.beta.rows(); ++k) t.beta.row(k) = t.beta.row(0);
  for (const TaskSpec& t : run.tasks) {
    run.train_data.push_back(sample_dataset(t, cfg.n_samples, cfg.sparsity, cfg.seed * 2 + 0));
    run.eval_data.push_back(sample_dataset(t, cfg.eval_samples, cfg.sparsity, cfg.seed * 2 + 1));
  }

  Rng init_rng(cfg.seed, 0x1417);
  Encoder enc = Encoder::random(cfg.m_dims, cfg.n_features, cfg.depth, init_rng);
  ProbeBank bank;
  const double probe_sd = cfg.probe_init_scale / std::sqrt(static_cast<double>(cfg.m_dims));
  for (const TaskSpec& t : run.tasks) {
    for (int k = 0; k < cfg.probes_per_task; ++k) {
      bank.add({init_rng.normal_vector(cfg.m_dims, probe_sd), t.index,
                cfg.train.probe_mode == ProbeMode::fixed});
    }
  }

  run.snapshots.emplace_back(-1, enc, bank);
  for (std::size_t t = 0; t < run.tasks.size(); ++t) {
    run.traces.push_back(train_task(enc, bank, run.tasks[t], run.train_data[t], cfg.train));
    run.snapshots.emplace_back(static_cast<int>(t), enc, bank, estimate_stats(run.train_data[t]));
  }
  return run;
}

}  // namespace forgetlab

#endif  // FORGETLAB_MODEL_HPP
