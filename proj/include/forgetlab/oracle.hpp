#ifndef FORGETLAB_ORACLE_HPP
#define FORGETLAB_ORACLE_HPP

// Closed-form predictions for the feature-reader model. Everything here is
// written against empirical second moments (FeatureStats), so comparisons
// with one full-batch step on the same data are exact up to rounding.
//
// All "gradient" matrices are m x n with column i the gradient with respect
// to phi_i. A plain gradient-descent update is -lr times that matrix.

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "forgetlab/core.hpp"
#include "forgetlab/geometry.hpp"
#include "forgetlab/linalg.hpp"
#include "forgetlab/model.hpp"
#include "forgetlab/tasks.hpp"

namespace forgetlab {

/// gamma_i = w^T phi_i
inline Vector probe_sensitivity(const ReadoutVector& w, const Matrix& phi) {
  if (w.size() != phi.rows()) {
    throw ShapeError("probe_sensitivity: probe has length " + std::to_string(w.size()) + ", features live in " +
                     std::to_string(phi.rows()) + " dims");
  }
  return phi.transpose() * w;
}

inline Vector probe_sensitivity(const ReadoutVector& w, const FeatureMatrix& phi) {
  return probe_sensitivity(w, phi.data());
}

struct UpdatePrediction {
  Matrix delta;  // m x n, column i is the update of phi_i
  Vector coeff;  // c_i = sum_j gamma_j Sigma_ij - beta_i
};

/// One plain gradient-descent step on phi with a fixed probe:
///   delta phi_i = -lr * c_i * w
inline UpdatePrediction expected_update(const FeatureStats& stats, const ReadoutVector& w, const Matrix& phi,
                                        double lr, Index output = 0) {
  detail::require(stats.sigma.rows() == phi.cols(), "expected_update: stats cover " +
                                                        std::to_string(stats.sigma.rows()) + " features, phi has " +
                                                        std::to_string(phi.cols()));
  detail::require(output >= 0 && output < stats.beta_hat.cols(), "expected_update: output out of range");
  const Vector gamma = probe_sensitivity(w, phi);
  UpdatePrediction p;
  p.coeff = stats.sigma * gamma - stats.beta(output);
  p.delta = -lr * w * p.coeff.transpose();
  return p;
}

struct LossChangePrediction {
  double alpha = 0.0;
  Vector v_a;
  Vector v_b;
  double delta_loss = 0.0;
  double loss_at_opt_a = 0.0;  // L_A(Phi_opt^A) = 1/2 (1 - beta_A^T Sigma_A^+ beta_A)
  double loss_at_opt_b = 0.0;  // L_A(Phi_opt^B)
  double label_scale = 1.0;    // task-A labels were multiplied by this
};

/// Increase of task-A loss when Phi moves from the minimal-norm task-A
/// optimum to the minimal-norm task-B optimum. Task-A labels are rescaled to
/// unit second moment first.
inline LossChangePrediction loss_change(const FeatureStats& stats_a, const FeatureStats& stats_b,
                                        const ReadoutVector& w_a, const ReadoutVector& w_b, Index output_a = 0,
                                        Index output_b = 0) {
  detail::require(stats_a.sigma.rows() == stats_b.sigma.rows(), "loss_change: tasks have different feature counts");
  detail::require(w_a.size() == w_b.size(), "loss_change: probe lengths differ");
  const double wb2 = w_b.squaredNorm();
  detail::require(wb2 > 0.0, "loss_change: task-B probe is zero");
  const double ey2 = stats_a.label_second_moment(output_a);
  detail::require(ey2 > 0.0, "loss_change: task-A labels are identically zero");

  LossChangePrediction r;
  r.label_scale = 1.0 / std::sqrt(ey2);
  const FeatureStats a = scale_labels(stats_a, r.label_scale);
  const Vector beta_a = a.beta(output_a);
  const Matrix& sig_a = a.sigma;

  r.alpha = w_a.dot(w_b) / wb2;
  r.v_a = pseudo_inverse(sig_a) * beta_a;
  r.v_b = pseudo_inverse(stats_b.sigma) * stats_b.beta(output_b);
  const Vector diff = r.alpha * r.v_b - r.v_a;
  r.delta_loss = 0.5 * quadratic_form(diff, sig_a);
  r.loss_at_opt_a = 0.5 * (1.0 - beta_a.dot(r.v_a));
  r.loss_at_opt_b = 0.5 * (r.alpha * r.alpha * quadratic_form(r.v_b, sig_a) - 2.0 * r.alpha * r.v_b.dot(beta_a) + 1.0);
  return r;
}

/// Phi_opt = w v^T / |w|^2, the minimal-Frobenius-norm solution of Phi^T w = v.
inline Matrix minimal_norm_optimum(const ReadoutVector& w, const Vector& v) {
  const double w2 = w.squaredNorm();
  detail::require(w2 > 0.0, "minimal_norm_optimum: probe is zero");
  return w * v.transpose() / w2;
}

struct LoadSharing {
  Vector grad_w;
  Matrix grad_phi;  // m x n
  double rho_w = 0.0;
  double rho_phi = 0.0;
  double predicted_delta = 0.0;  // first-order loss change of one joint step
};

/// Gradient split between a co-adapting probe and the features it reads.
/// Throws std::domain_error at a stationary point, where the split is undefined.
inline LoadSharing load_sharing(const Matrix& phi, const ReadoutVector& w, const FeatureStats& stats, double lr_w,
                                double lr_phi, Index output = 0) {
  detail::require(w.size() == phi.rows(), "load_sharing: probe length mismatch");
  detail::require(stats.sigma.rows() == phi.cols(), "load_sharing: stats do not match phi");
  const Vector beta = stats.beta(output);
  const Vector gamma = phi.transpose() * w;
  LoadSharing r;
  r.grad_w = phi * (stats.sigma * gamma) - phi * beta;
  r.grad_phi = w * (stats.sigma * gamma - beta).transpose();
  const double gw = r.grad_w.squaredNorm();
  const double gp = r.grad_phi.squaredNorm();
  if (gw + gp == 0.0) throw std::domain_error("load_sharing: both gradients vanish, load split undefined");
  r.rho_w = gw / (gw + gp);
  r.rho_phi = gp / (gw + gp);
  r.predicted_delta = -lr_w * gw - lr_phi * gp;
  return r;
}

inline LoadSharing load_sharing(const Encoder& enc, const ReadoutVector& w, const FeatureStats& stats, double lr_w,
                                double lr_phi, Index output = 0) {
  detail::require(enc.depth() == 1, "load_sharing: only defined for a single-layer encoder");
  return load_sharing(enc.product(), w, stats, lr_w, lr_phi, output);
}

/// Gradient on phi split into the part driven by the current classes and
/// the part that pushes old-class readouts toward their zero targets.
struct DecomposedUpdate {
  Matrix learning;     // m x n
  Matrix suppression;  // m x n
  Matrix total;        // learning + suppression
};

namespace detail {

inline void check_class_split(const std::vector<Index>& old_classes, const std::vector<Index>& new_classes,
                              Index n_probes, bool must_cover) {
  std::set<Index> seen;
  for (Index c : old_classes) {
    require(c >= 0 && c < n_probes, "class index " + std::to_string(c) + " out of range");
    seen.insert(c);
  }
  for (Index c : new_classes) {
    require(c >= 0 && c < n_probes, "class index " + std::to_string(c) + " out of range");
    if (!seen.insert(c).second) {
      throw std::invalid_argument("class " + std::to_string(c) + " is listed as both old and new");
    }
  }
  if (must_cover && static_cast<Index>(seen.size()) != n_probes) {
    throw std::invalid_argument("every probe must belong to the old or the new class set");
  }
}

inline Matrix select_columns(const Matrix& m, const std::vector<Index>& ids) {
  Matrix out(m.rows(), static_cast<Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) out.col(static_cast<Index>(k)) = m.col(ids[k]);
  return out;
}

}  // namespace detail

/// Multi-output MSE on task B with shared probes: old classes (C_A) get zero
/// targets. stats_b.beta_hat column k belongs to new_classes[k].
///   learning_i    = sum_{c in C_B} (sum_j gamma_jc Sigma_ij - beta_ic) w_c
///   suppression_i = sum_{c in C_A} (sum_j gamma_jc Sigma_ij) w_c
inline DecomposedUpdate shared_probe_update(const FeatureStats& stats_b, const Matrix& probes,
                                            const std::vector<Index>& old_classes,
                                            const std::vector<Index>& new_classes, const Matrix& phi) {
  detail::check_class_split(old_classes, new_classes, probes.cols(), false);
  detail::require(probes.rows() == phi.rows(), "shared_probe_update: probe length mismatch");
  detail::require(stats_b.sigma.rows() == phi.cols(), "shared_probe_update: stats do not match phi");
  detail::require(stats_b.beta_hat.cols() == static_cast<Index>(new_classes.size()),
                  "shared_probe_update: need one beta column per new class");
  const Matrix w_a = detail::select_columns(probes, old_classes);
  const Matrix w_b = detail::select_columns(probes, new_classes);
  DecomposedUpdate u;
  u.learning = w_b * ((phi.transpose() * w_b).transpose() * stats_b.sigma - stats_b.beta_hat.transpose());
  if (old_classes.empty()) {
    u.suppression = Matrix::Zero(phi.rows(), phi.cols());
  } else {
    u.suppression = w_a * ((phi.transpose() * w_a).transpose() * stats_b.sigma);
  }
  u.total = u.learning + u.suppression;
  return u;
}

/// Softmax cross-entropy on task B over all probes. `targets` is N x |C_B|
/// (one-hot over the new classes); old classes implicitly have target 0.
///   learning_i    = sum_{c in C_B} (E[p_c f_i] - beta_ic) w_c
///   suppression_i = sum_{c in C_A} E[p_c f_i] w_c
inline DecomposedUpdate ce_update(const Matrix& features, const Matrix& targets, const Matrix& probes,
                                  const std::vector<Index>& old_classes, const std::vector<Index>& new_classes,
                                  const Matrix& phi) {
  detail::check_class_split(old_classes, new_classes, probes.cols(), true);
  detail::require(probes.cols() >= 2, "ce_update: need at least two classes");
  detail::require(probes.rows() == phi.rows(), "ce_update: probe length mismatch");
  detail::require(features.cols() == phi.cols(), "ce_update: feature count mismatch");
  detail::require(targets.rows() == features.rows() && targets.cols() == static_cast<Index>(new_classes.size()),
                  "ce_update: targets must be N x |new classes|");
  const double inv_n = 1.0 / static_cast<double>(features.rows());
  const Matrix p = detail::softmax_rows(features * (phi.transpose() * probes));
  const Matrix pf = p.transpose() * features * inv_n;        // K x n, E[p_c f]
  const Matrix beta = targets.transpose() * features * inv_n;  // |C_B| x n
  DecomposedUpdate u;
  u.learning = Matrix::Zero(phi.rows(), phi.cols());
  u.suppression = Matrix::Zero(phi.rows(), phi.cols());
  for (std::size_t k = 0; k < new_classes.size(); ++k) {
    const Index c = new_classes[k];
    u.learning += probes.col(c) * (pf.row(c) - beta.row(static_cast<Index>(k)));
  }
  for (Index c : old_classes) u.suppression += probes.col(c) * pf.row(c);
  u.total = u.learning + u.suppression;
  return u;
}

}  // namespace forgetlab

#endif  // FORGETLAB_ORACLE_HPP
