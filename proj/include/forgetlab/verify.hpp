#ifndef FORGETLAB_VERIFY_HPP
#define FORGETLAB_VERIFY_HPP

// Randomized comparisons of the closed-form predictions against the trainer,
// plus central finite-difference checks of every analytic gradient.

#include <Eigen/QR>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "forgetlab/core.hpp"
#include "forgetlab/crosscoder.hpp"
#include "forgetlab/model.hpp"
#include "forgetlab/oracle.hpp"
#include "forgetlab/random.hpp"
#include "forgetlab/tasks.hpp"

namespace forgetlab {

struct CheckResult {
  std::string name;
  int instances = 0;
  int passed = 0;
  double max_error = 0.0;
  double threshold = 0.0;
  bool ok = false;
  double seconds = 0.0;
  std::string note;
};

struct OracleReport {
  std::vector<CheckResult> checks;
  bool ok() const {
    for (const CheckResult& c : checks)
      if (!c.ok) return false;
    return true;
  }
};

inline CheckResult make_check(std::string name, int instances, double threshold) {
  CheckResult c;
  c.name = std::move(name);
  c.instances = instances;
  c.threshold = threshold;
  return c;
}

namespace detail {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

/// N x n masked-uniform activations; each entry is nonzero with prob `density`.
inline Matrix random_activations(Rng& rng, Index n_samples, Index n, double density) {
  Matrix f = Matrix::Zero(n_samples, n);
  for (Index s = 0; s < n_samples; ++s)
    for (Index i = 0; i < n; ++i)
      if (rng.uniform() < density) f(s, i) = rng.uniform();
  return f;
}

inline Index rand_between(Rng& rng, Index lo, Index hi) {
  return lo + static_cast<Index>(rng.index(static_cast<std::size_t>(hi - lo + 1)));
}

inline double rel_max_error(const Matrix& a, const Matrix& ref) {
  const double scale = std::max(ref.cwiseAbs().maxCoeff(), 1e-300);
  return (a - ref).cwiseAbs().maxCoeff() / scale;
}

/// |a - b| / max(|a|, |b|) in Frobenius norm; 0 when both vanish.
inline double rel_norm_error(const Matrix& a, const Matrix& b) {
  const double s = std::max(a.norm(), b.norm());
  return s == 0.0 ? 0.0 : (a - b).norm() / s;
}

/// Central differences of f with respect to every entry of x.
inline Matrix numeric_gradient(Matrix& x, const std::function<double()>& f, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      const double keep = x(i, j);
      x(i, j) = keep + h;
      const double up = f();
      x(i, j) = keep - h;
      const double down = f();
      x(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

}  // namespace detail

/// One plain-GD full-batch step with a fixed probe equals the predicted
/// per-feature update.
inline CheckResult check_lemma1(std::uint64_t seed, int instances = 100, double tol = 1e-9) {
  detail::Timer timer;
  Rng rng(seed, 0x1e11);
  CheckResult r = make_check("feature update (fixed probe)", instances, tol);
  for (int k = 0; k < instances; ++k) {
    const Index m = detail::rand_between(rng, 1, 8);
    const Index n = detail::rand_between(rng, 1, 12);
    const Index samples = detail::rand_between(rng, 10, 500);
    Dataset data;
    data.features = detail::random_activations(rng, samples, n, rng.uniform(0.1, 0.9));
    data.labels = data.features * rng.normal_vector(n);
    const double lr = rng.uniform(0.01, 0.5);

    Encoder enc({rng.normal_matrix(m, n, 1.0 / std::sqrt(static_cast<double>(n)))});
    const Matrix phi0 = enc.product();
    ProbeBank bank({Probe{rng.normal_vector(m, 1.0 / std::sqrt(static_cast<double>(m))), 0, true}});
    const UpdatePrediction pred = expected_update(estimate_stats(data), bank[0].w, phi0, lr);

    TrainConfig cfg;
    cfg.optimizer = OptimizerKind::plain_gd;
    cfg.learning_rate = lr;
    TaskTrainer trainer(enc, bank, HeadTargets{{0}, data.labels}, data.features, cfg);
    trainer.step();
    const Matrix empirical = enc.product() - phi0;
    const double err = empirical.cwiseAbs().maxCoeff() == 0.0 ? pred.delta.cwiseAbs().maxCoeff()
                                                             : detail::rel_max_error(pred.delta, empirical);
    r.max_error = std::max(r.max_error, err);
    r.passed += err < tol ? 1 : 0;
  }
  r.ok = r.passed == instances;
  r.seconds = timer.seconds();
  return r;
}

/// The loss-change formula against direct task-A loss evaluation at
/// explicitly constructed minimal-norm optima. The optima are built from a
/// complete orthogonal decomposition least-squares solve, independent of the
/// SVD pseudoinverse used by the formula.
inline CheckResult check_theorem1(std::uint64_t seed, int instances = 100, double tol = 1e-8) {
  detail::Timer timer;
  Rng rng(seed, 0x7e01);
  CheckResult r = make_check("loss change at task optima", instances, tol);
  double min_delta = 0.0;
  for (int k = 0; k < instances; ++k) {
    const Index m = detail::rand_between(rng, 2, 8);
    const Index n = detail::rand_between(rng, 2, 12);
    const Index na = detail::rand_between(rng, 50, 500);
    const Index nb = detail::rand_between(rng, 50, 500);
    const Matrix fa = detail::random_activations(rng, na, n, rng.uniform(0.2, 0.8));
    const Matrix fb = detail::random_activations(rng, nb, n, rng.uniform(0.2, 0.8));
    const Vector ya = fa * rng.normal_vector(n);
    const Vector yb = fb * rng.normal_vector(n);
    Vector wa = rng.normal_vector(m);
    const Vector wb = rng.normal_vector(m);
    if (k % 5 == 0) wa = rng.uniform(0.5, 2.0) * wb;  // aligned probes

    const LossChangePrediction pred = loss_change(estimate_stats(fa, ya), estimate_stats(fb, yb), wa, wb);

    const Vector ya_unit = ya / std::sqrt(ya.squaredNorm() / static_cast<double>(na));
    const Vector va = Eigen::CompleteOrthogonalDecomposition<Matrix>(fa).solve(ya_unit);
    const Vector vb = Eigen::CompleteOrthogonalDecomposition<Matrix>(fb).solve(yb);
    auto loss_a = [&](const Matrix& phi) {
      return 0.5 * (fa * (phi.transpose() * wa) - ya_unit).squaredNorm() / static_cast<double>(na);
    };
    const double direct = loss_a(wb * vb.transpose() / wb.squaredNorm()) - loss_a(wa * va.transpose() / wa.squaredNorm());
    const double err = std::abs(direct - pred.delta_loss);
    min_delta = std::min(min_delta, pred.delta_loss);
    r.max_error = std::max(r.max_error, err);
    r.passed += (err < tol && pred.delta_loss >= -1e-10) ? 1 : 0;
  }
  r.ok = r.passed == instances;
  r.note = "min delta_loss " + std::to_string(min_delta);
  r.seconds = timer.seconds();
  return r;
}

/// First-order prediction of a joint probe + feature step. The error
/// against the exact loss change must shrink at least 4x when the step is
/// halved.
inline CheckResult check_load_sharing(std::uint64_t seed, int instances = 100, double eta = 1e-2,
                                      double required_fraction = 0.95) {
  detail::Timer timer;
  Rng rng(seed, 0x10ad);
  CheckResult r = make_check("load sharing first-order loss drop", instances, 4.0);
  double min_ratio = 1e300;
  double rho_err = 0.0;
  std::vector<double> ratios;
  for (int k = 0; k < instances; ++k) {
    const Index m = detail::rand_between(rng, 2, 8);
    const Index n = detail::rand_between(rng, 2, 12);
    const Index samples = detail::rand_between(rng, 50, 500);
    Dataset data;
    data.features = detail::random_activations(rng, samples, n, 0.5);
    data.labels = data.features * rng.normal_vector(n);
    const FeatureStats stats = estimate_stats(data);
    const Matrix phi = rng.normal_matrix(m, n, 1.0 / std::sqrt(static_cast<double>(n)));
    const Vector w = rng.normal_vector(m, 1.0 / std::sqrt(static_cast<double>(m)));

    auto error_at = [&](double lr) {
      const LoadSharing pred = load_sharing(phi, w, stats, lr, lr);
      rho_err = std::max(rho_err, std::abs(pred.rho_w + pred.rho_phi - 1.0));
      Encoder enc({phi});
      ProbeBank bank({Probe{w, 0, false}});
      TrainConfig cfg;
      cfg.optimizer = OptimizerKind::plain_gd;
      cfg.learning_rate = lr;
      cfg.probe_lr = lr;
      cfg.probe_mode = ProbeMode::coadapt;
      TaskTrainer trainer(enc, bank, HeadTargets{{0}, data.labels}, data.features, cfg);
      const double before = trainer.step();
      const double after = trainer.loss();
      return std::abs((after - before) - pred.predicted_delta);
    };
    const double ratio = error_at(eta) / error_at(eta / 2.0);
    ratios.push_back(ratio);
    min_ratio = std::min(min_ratio, ratio);
    r.passed += ratio >= 4.0 ? 1 : 0;
  }
  std::sort(ratios.begin(), ratios.end());
  r.max_error = min_ratio;
  r.ok = r.passed >= static_cast<int>(std::ceil(required_fraction * instances)) && rho_err < 1e-12;
  r.note = "eta " + std::to_string(eta) + ", error ratio min " + std::to_string(min_ratio) + " median " +
           std::to_string(ratios[ratios.size() / 2]) + " max " + std::to_string(ratios.back());
  r.seconds = timer.seconds();
  return r;
}

namespace detail {

struct MultiClassInstance {
  Matrix features;
  Matrix probes;  // m x K
  Matrix phi;
  std::vector<Index> old_classes;
  std::vector<Index> new_classes;
};

inline MultiClassInstance random_multiclass(Rng& rng) {
  MultiClassInstance x;
  const Index m = rand_between(rng, 2, 8);
  const Index n = rand_between(rng, 2, 12);
  const Index k = rand_between(rng, 3, 6);
  const Index n_old = rand_between(rng, 1, k - 2);
  x.features = random_activations(rng, rand_between(rng, 20, 300), n, 0.5);
  x.probes = rng.normal_matrix(m, k, 1.0 / std::sqrt(static_cast<double>(m)));
  x.phi = rng.normal_matrix(m, n, 1.0 / std::sqrt(static_cast<double>(n)));
  for (Index c = 0; c < k; ++c) (c < n_old ? x.old_classes : x.new_classes).push_back(c);
  return x;
}

/// N x K targets with zero columns for the old classes.
inline Matrix full_targets(const Matrix& new_targets, const MultiClassInstance& x) {
  Matrix t = Matrix::Zero(x.features.rows(), x.probes.cols());
  for (std::size_t k = 0; k < x.new_classes.size(); ++k) t.col(x.new_classes[k]) = new_targets.col(static_cast<Index>(k));
  return t;
}

}  // namespace detail

/// Shared-probe multi-output MSE and softmax cross-entropy decompositions
/// against the trainer's full-batch gradient.
inline CheckResult check_shared_probe(std::uint64_t seed, int instances = 100, double tol = 1e-10) {
  detail::Timer timer;
  Rng rng(seed, 0x5d01);
  CheckResult r = make_check("shared-probe MSE and CE gradients", 2 * instances, tol);
  for (int k = 0; k < instances; ++k) {
    const detail::MultiClassInstance x = detail::random_multiclass(rng);
    const Index nb = static_cast<Index>(x.new_classes.size());
    const Encoder enc({x.phi});

    const Matrix y = x.features * rng.normal_matrix(x.features.cols(), nb);
    const DecomposedUpdate mse = shared_probe_update(estimate_stats(x.features, y), x.probes, x.old_classes,
                                                     x.new_classes, x.phi);
    const Gradients g_mse =
        loss_and_gradients(enc, x.probes, x.features, detail::full_targets(y, x), LossKind::mse);
    const double e1 = detail::rel_max_error(mse.total, g_mse.phi);

    const Matrix onehot = detail::one_hot_argmax(x.features * rng.normal_matrix(x.features.cols(), nb));
    const DecomposedUpdate ce = ce_update(x.features, onehot, x.probes, x.old_classes, x.new_classes, x.phi);
    const Gradients g_ce =
        loss_and_gradients(enc, x.probes, x.features, detail::full_targets(onehot, x), LossKind::cross_entropy);
    const double e2 = detail::rel_max_error(ce.total, g_ce.phi);

    r.max_error = std::max({r.max_error, e1, e2});
    r.passed += (e1 < tol ? 1 : 0) + (e2 < tol ? 1 : 0);
  }
  r.ok = r.passed == r.instances;
  r.seconds = timer.seconds();
  return r;
}

/// Features with no component along any old-class probe receive no
/// suppression at all.
inline CheckResult check_orthogonal_suppression(std::uint64_t seed, int instances = 100) {
  detail::Timer timer;
  Rng rng(seed, 0x0a7d);
  CheckResult r = make_check("suppression vanishes for features orthogonal to old probes", instances, 0.0);
  for (int k = 0; k < instances; ++k) {
    detail::MultiClassInstance x = detail::random_multiclass(rng);
    const Index m = x.phi.rows();
    if (m < 2) continue;
    const Index split = detail::rand_between(rng, 1, m - 1);
    // old probes live in the first `split` coordinates, features in the rest
    for (Index c : x.old_classes) x.probes.col(c).tail(m - split).setZero();
    x.phi.topRows(split).setZero();
    const Matrix y = x.features * rng.normal_matrix(x.features.cols(), static_cast<Index>(x.new_classes.size()));
    const DecomposedUpdate u =
        shared_probe_update(estimate_stats(x.features, y), x.probes, x.old_classes, x.new_classes, x.phi);
    const double s = u.suppression.cwiseAbs().maxCoeff();
    r.max_error = std::max(r.max_error, s);
    r.passed += s == 0.0 ? 1 : 0;
  }
  r.ok = r.passed == r.instances;
  r.seconds = timer.seconds();
  return r;
}

/// Finite-difference checks for the feature-reader losses (MSE and CE,
/// depth 1-3, features only or features and heads) and the crosscoder loss
/// with one and two snapshots.
inline CheckResult check_gradients(std::uint64_t seed, double tol = 1e-6) {
  detail::Timer timer;
  Rng rng(seed, 0x9ad0);
  CheckResult r = make_check("finite-difference gradients", 0, tol);
  auto record = [&](double err) {
    ++r.instances;
    r.max_error = std::max(r.max_error, err);
    r.passed += err < tol ? 1 : 0;
  };

  for (LossKind loss : {LossKind::mse, LossKind::cross_entropy}) {
    for (int depth = 1; depth <= 3; ++depth) {
      for (bool heads_trainable : {false, true}) {
        const Index m = 4, n = 6, samples = 30;
        const Index k = loss == LossKind::mse ? 2 : 3;
        Encoder enc = Encoder::random(m, n, depth, rng);
        Matrix heads = rng.normal_matrix(m, k, 0.5);
        const Matrix f = detail::random_activations(rng, samples, n, 0.5);
        const Matrix targets = loss == LossKind::mse ? Matrix(f * rng.normal_matrix(n, k))
                                                     : detail::one_hot_argmax(f * rng.normal_matrix(n, k));
        const Gradients g = loss_and_gradients(enc, heads, f, targets, loss);
        auto fn = [&] { return evaluate_loss(enc, heads, f, targets, loss); };
        for (int l = 0; l < depth; ++l) {
          record(detail::rel_norm_error(g.layers[static_cast<std::size_t>(l)],
                                        detail::numeric_gradient(enc.layers()[static_cast<std::size_t>(l)], fn)));
        }
        if (heads_trainable) record(detail::rel_norm_error(g.heads, detail::numeric_gradient(heads, fn)));
      }
    }
  }

  for (int snapshots : {1, 2}) {
    std::vector<int> ids;
    for (int t = 0; t < snapshots; ++t) ids.push_back(t);
    Crosscoder cc = Crosscoder::init(ids, 5, 8, 3, rng);
    cc.encoder_bias() = rng.normal_vector(8, 0.1);
    for (Vector& b : cc.decoder_biases()) b = rng.normal_vector(5, 0.1);
    std::vector<Matrix> batch;
    for (int t = 0; t < snapshots; ++t) batch.push_back(rng.normal_matrix(10, 5));
    const double lambda = 0.1;
    const LatentMask mask = topk_mask(cc.pre_activations(batch), cc.k());
    const CrosscoderGradients g = crosscoder_gradients(cc, batch, lambda, &mask);
    auto fn = [&] { return crosscoder_loss(cc, batch, lambda, &mask); };
    for (int t = 0; t < snapshots; ++t) {
      record(detail::rel_norm_error(g.w_enc[static_cast<std::size_t>(t)],
                                    detail::numeric_gradient(cc.encoders()[static_cast<std::size_t>(t)], fn)));
      record(detail::rel_norm_error(g.w_dec[static_cast<std::size_t>(t)],
                                    detail::numeric_gradient(cc.decoders()[static_cast<std::size_t>(t)], fn)));
      Matrix b = cc.decoder_biases()[static_cast<std::size_t>(t)];
      auto fb = [&] {
        cc.decoder_biases()[static_cast<std::size_t>(t)] = b.col(0);
        return fn();
      };
      record(detail::rel_norm_error(g.b_dec[static_cast<std::size_t>(t)], detail::numeric_gradient(b, fb)));
      cc.decoder_biases()[static_cast<std::size_t>(t)] = b.col(0);
    }
    Matrix be = cc.encoder_bias();
    auto fe = [&] {
      cc.encoder_bias() = be.col(0);
      return fn();
    };
    record(detail::rel_norm_error(g.b_enc, detail::numeric_gradient(be, fe)));
    cc.encoder_bias() = be.col(0);
  }
  r.ok = r.passed == r.instances;
  r.seconds = timer.seconds();
  return r;
}

inline OracleReport run_oracle_suite(std::uint64_t seed, int instances = 100) {
  OracleReport rep;
  rep.checks.push_back(check_lemma1(seed, instances));
  rep.checks.push_back(check_theorem1(seed, instances));
  rep.checks.push_back(check_load_sharing(seed, instances));
  rep.checks.push_back(check_shared_probe(seed, instances));
  rep.checks.push_back(check_orthogonal_suppression(seed, instances));
  rep.checks.push_back(check_gradients(seed));
  return rep;
}

}  // namespace forgetlab

#endif  // FORGETLAB_VERIFY_HPP
