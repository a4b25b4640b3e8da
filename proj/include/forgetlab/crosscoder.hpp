#ifndef FORGETLAB_CROSSCODER_HPP
#define FORGETLAB_CROSSCODER_HPP

// TopK crosscoder over several model snapshots.
//
//   f(x)      = TopK(ReLU(sum_t W_enc^t a^t(x) + b_enc))
//   a_hat^t   = W_dec^t f(x) + b_dec^t
//   loss      = mean_x [ sum_t |a^t - a_hat^t|^2 + lambda sum_i f_i sum_t |W_dec,i^t| ]
//
// With a single snapshot this is an ordinary TopK sparse autoencoder.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <type_traits>
#include <vector>

#include "forgetlab/core.hpp"
#include "forgetlab/geometry.hpp"
#include "forgetlab/linalg.hpp"
#include "forgetlab/optim.hpp"
#include "forgetlab/random.hpp"

namespace forgetlab {

/// Activations of several snapshots on one shared input set. acts[t] is
/// N x d_model and row s of every matrix belongs to the same input.
struct ActivationDataset {
  std::vector<int> snapshot_ids;
  std::vector<Matrix> acts;

  Index snapshots() const { return static_cast<Index>(acts.size()); }
  Index size() const { return acts.empty() ? 0 : acts.front().rows(); }
  Index d_model() const { return acts.empty() ? 0 : acts.front().cols(); }

  void validate() const {
    detail::require(!acts.empty(), "ActivationDataset: no snapshots");
    detail::require(snapshot_ids.size() == acts.size(), "ActivationDataset: one id per snapshot required");
    for (const Matrix& a : acts) {
      detail::require(a.rows() == size() && a.cols() == d_model(),
                      "ActivationDataset: snapshots disagree in shape (" + detail::shape_str(a.rows(), a.cols()) +
                          " vs " + detail::shape_str(size(), d_model()) + ")");
    }
  }

  /// Rows `ids` of every snapshot.
  std::vector<Matrix> rows(const std::vector<Index>& ids) const {
    std::vector<Matrix> out;
    out.reserve(acts.size());
    for (const Matrix& a : acts) {
      Matrix b(static_cast<Index>(ids.size()), a.cols());
      for (std::size_t k = 0; k < ids.size(); ++k) b.row(static_cast<Index>(k)) = a.row(ids[k]);
      out.push_back(std::move(b));
    }
    return out;
  }
};

struct CrosscoderConfig {
  Index d_cross = 0;  // 0 means 1.5 * d_model
  int k = 6;
  double learning_rate = 5e-4;
  Index batch_size = 256;
  int epochs = 3;
  double lambda_max = 1e-3;
  double warmup_fraction = 0.05;
  std::uint64_t seed = 0;
  AdamParams adam;
};

using LatentMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

/// Positions of the K largest strictly positive entries of z; equal values
/// go to the lower index.
inline std::vector<Index> topk_indices(const Eigen::Ref<const Vector>& z, int k) {
  std::vector<Index> pos;
  for (Index i = 0; i < z.size(); ++i)
    if (z(i) > 0.0) pos.push_back(i);
  const auto better = [&](Index a, Index b) { return z(a) > z(b) || (z(a) == z(b) && a < b); };
  if (static_cast<Index>(pos.size()) > k) {
    std::partial_sort(pos.begin(), pos.begin() + k, pos.end(), better);
    pos.resize(static_cast<std::size_t>(k));
  }
  return pos;
}

}  // namespace detail

/// Rows of `pre` (B x d_cross) reduced to their TopK-after-ReLU support.
inline LatentMask topk_mask(const Matrix& pre, int k) {
  LatentMask mask = LatentMask::Constant(pre.rows(), pre.cols(), false);
  for (Index s = 0; s < pre.rows(); ++s) {
    const Vector row = pre.row(s).transpose();
    for (Index i : detail::topk_indices(row, k)) mask(s, i) = true;
  }
  return mask;
}

class Crosscoder {
 public:
  Crosscoder() = default;

  /// Decoder columns are random unit vectors, the encoder is their transpose,
  /// and every bias starts at zero.
  static Crosscoder init(const std::vector<int>& snapshot_ids, Index d_model, Index d_cross, int k, Rng& rng) {
    detail::require(!snapshot_ids.empty(), "Crosscoder: need at least one snapshot");
    detail::require(d_model >= 1, "Crosscoder: d_model must be positive");
    detail::require(d_cross > d_model, "Crosscoder: d_cross (" + std::to_string(d_cross) +
                                           ") must exceed d_model (" + std::to_string(d_model) + ")");
    detail::require(k >= 1 && k <= d_cross, "Crosscoder: need 1 <= K <= d_cross");
    Crosscoder c;
    c.ids_ = snapshot_ids;
    c.k_ = k;
    c.b_enc_ = Vector::Zero(d_cross);
    for (std::size_t t = 0; t < snapshot_ids.size(); ++t) {
      Matrix dec = rng.normal_matrix(d_model, d_cross);
      for (Index i = 0; i < d_cross; ++i) dec.col(i).normalize();
      c.w_enc_.push_back(dec.transpose());
      c.w_dec_.push_back(std::move(dec));
      c.b_dec_.push_back(Vector::Zero(d_model));
    }
    return c;
  }

  /// Assemble a state from explicit parameters.
  static Crosscoder from_parameters(std::vector<int> snapshot_ids, std::vector<Matrix> w_enc, Vector b_enc,
                                    std::vector<Matrix> w_dec, std::vector<Vector> b_dec, int k) {
    const std::size_t t = snapshot_ids.size();
    detail::require(t >= 1 && w_enc.size() == t && w_dec.size() == t && b_dec.size() == t,
                    "Crosscoder: one encoder, decoder and bias per snapshot required");
    const Index d_cross = b_enc.size();
    const Index d_model = w_dec.front().rows();
    detail::require(d_cross > d_model, "Crosscoder: d_cross must exceed d_model");
    detail::require(k >= 1 && k <= d_cross, "Crosscoder: need 1 <= K <= d_cross");
    for (std::size_t s = 0; s < t; ++s) {
      detail::require(w_enc[s].rows() == d_cross && w_enc[s].cols() == d_model, "Crosscoder: bad encoder shape");
      detail::require(w_dec[s].rows() == d_model && w_dec[s].cols() == d_cross, "Crosscoder: bad decoder shape");
      detail::require(b_dec[s].size() == d_model, "Crosscoder: bad decoder bias length");
    }
    Crosscoder c;
    c.ids_ = std::move(snapshot_ids);
    c.w_enc_ = std::move(w_enc);
    c.b_enc_ = std::move(b_enc);
    c.w_dec_ = std::move(w_dec);
    c.b_dec_ = std::move(b_dec);
    c.k_ = k;
    return c;
  }

  Index snapshots() const { return static_cast<Index>(ids_.size()); }
  Index d_model() const { return w_dec_.front().rows(); }
  Index d_cross() const { return b_enc_.size(); }
  int k() const { return k_; }
  const std::vector<int>& snapshot_ids() const { return ids_; }

  /// Position of a snapshot id in the parameter lists.
  Index slot(int snapshot_id) const {
    const auto it = std::find(ids_.begin(), ids_.end(), snapshot_id);
    if (it == ids_.end()) throw std::out_of_range("Crosscoder: unknown snapshot id " + std::to_string(snapshot_id));
    return it - ids_.begin();
  }

  const Matrix& encoder(Index slot) const { return w_enc_.at(static_cast<std::size_t>(slot)); }
  const Matrix& decoder(Index slot) const { return w_dec_.at(static_cast<std::size_t>(slot)); }
  const Vector& decoder_bias(Index slot) const { return b_dec_.at(static_cast<std::size_t>(slot)); }
  const Vector& encoder_bias() const { return b_enc_; }

  std::vector<Matrix>& encoders() { return w_enc_; }
  std::vector<Matrix>& decoders() { return w_dec_; }
  std::vector<Vector>& decoder_biases() { return b_dec_; }
  Vector& encoder_bias() { return b_enc_; }

  /// Pre-activations for a batch: sum_t A^t W_enc^t^T + b_enc (B x d_cross).
  Matrix pre_activations(const std::vector<Matrix>& batch) const {
    check_batch(batch);
    Matrix z = batch[0] * w_enc_[0].transpose();
    for (std::size_t t = 1; t < batch.size(); ++t) z.noalias() += batch[t] * w_enc_[t].transpose();
    z.rowwise() += b_enc_.transpose();
    return z;
  }

  /// Latent codes of a batch (B x d_cross).
  Matrix encode_batch(const std::vector<Matrix>& batch) const {
    const Matrix z = pre_activations(batch);
    const LatentMask mask = topk_mask(z, k_);
    return mask.select(z, 0.0);
  }

  /// Latent code of one input given one activation vector per snapshot.
  Vector encode(const std::vector<Vector>& acts) const {
    std::vector<Matrix> batch;
    for (const Vector& a : acts) batch.emplace_back(a.transpose());
    return encode_batch(batch).row(0).transpose();
  }

  Vector decode(const Vector& f, int snapshot_id) const {
    detail::require(f.size() == d_cross(), "Crosscoder::decode: code length " + std::to_string(f.size()) +
                                               " != d_cross " + std::to_string(d_cross()));
    const Index s = slot(snapshot_id);
    return w_dec_[s] * f + b_dec_[s];
  }

  /// Decoded activations for every snapshot (each B x d_model).
  std::vector<Matrix> decode_batch(const Matrix& codes) const {
    std::vector<Matrix> out;
    for (std::size_t t = 0; t < w_dec_.size(); ++t) {
      Matrix r = codes * w_dec_[t].transpose();
      r.rowwise() += b_dec_[t].transpose();
      out.push_back(std::move(r));
    }
    return out;
  }

  /// sum_t |W_dec,i^t| for each latent i.
  Vector decoder_norm_sum() const {
    Vector s = Vector::Zero(d_cross());
    for (const Matrix& d : w_dec_) s += d.colwise().norm().transpose();
    return s;
  }

 private:
  void check_batch(const std::vector<Matrix>& batch) const {
    detail::require(static_cast<Index>(batch.size()) == snapshots(),
                    "Crosscoder: expected activations for " + std::to_string(snapshots()) + " snapshots, got " +
                        std::to_string(batch.size()));
    for (const Matrix& a : batch) {
      detail::require(a.cols() == d_model() && a.rows() == batch[0].rows(),
                      "Crosscoder: activation batch has shape " + detail::shape_str(a.rows(), a.cols()));
    }
  }

  std::vector<int> ids_;
  std::vector<Matrix> w_enc_;
  Vector b_enc_;
  std::vector<Matrix> w_dec_;
  std::vector<Vector> b_dec_;
  int k_ = 1;
};

struct CrosscoderGradients {
  double loss = 0.0;
  double reconstruction = 0.0;  // mean over samples of sum_t |a - a_hat|^2
  std::vector<Matrix> w_enc;
  Vector b_enc;
  std::vector<Matrix> w_dec;
  std::vector<Vector> b_dec;
};

/// Loss and gradients on a batch. Gradients flow only through latents kept by
/// TopK. Passing `mask` freezes the support, which makes the loss smooth in
/// the parameters (used for finite-difference checks).
inline CrosscoderGradients crosscoder_gradients(const Crosscoder& cc, const std::vector<Matrix>& batch, double lambda,
                                                const LatentMask* mask = nullptr) {
  const Matrix z = cc.pre_activations(batch);
  const LatentMask m = mask ? *mask : topk_mask(z, cc.k());
  detail::require(m.rows() == z.rows() && m.cols() == z.cols(), "crosscoder_gradients: mask shape mismatch");
  const Matrix f = m.select(z, 0.0);
  const double inv_b = 1.0 / static_cast<double>(z.rows());
  const Vector norm_sum = cc.decoder_norm_sum();
  const std::vector<Matrix> recon = cc.decode_batch(f);

  CrosscoderGradients g;
  Matrix df = Matrix::Zero(f.rows(), f.cols());
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const Matrix r = recon[t] - batch[t];
    g.reconstruction += r.squaredNorm() * inv_b;
    const Matrix dr = 2.0 * inv_b * r;
    df.noalias() += dr * cc.decoder(static_cast<Index>(t));
    Matrix dw = dr.transpose() * f;
    g.b_dec.push_back(dr.colwise().sum().transpose());
    g.w_dec.push_back(std::move(dw));
  }
  const double sparsity = (f * norm_sum).sum() * inv_b;
  g.loss = g.reconstruction + lambda * sparsity;

  if (lambda != 0.0) {
    const Vector usage = f.colwise().sum().transpose() * inv_b;  // mean f_i
    for (std::size_t t = 0; t < batch.size(); ++t) {
      const Matrix& d = cc.decoder(static_cast<Index>(t));
      for (Index i = 0; i < d.cols(); ++i) {
        const double nrm = d.col(i).norm();
        if (nrm > 0.0) g.w_dec[t].col(i) += lambda * usage(i) * d.col(i) / nrm;
      }
    }
    df.rowwise() += (lambda * inv_b) * norm_sum.transpose();
  }

  const Matrix dz = m.select(df, 0.0);
  g.b_enc = dz.colwise().sum().transpose();
  for (const Matrix& a : batch) g.w_enc.push_back(dz.transpose() * a);
  return g;
}

inline double crosscoder_loss(const Crosscoder& cc, const std::vector<Matrix>& batch, double lambda,
                              const LatentMask* mask = nullptr) {
  const Matrix z = cc.pre_activations(batch);
  const LatentMask m = mask ? *mask : topk_mask(z, cc.k());
  const Matrix f = m.select(z, 0.0);
  const std::vector<Matrix> recon = cc.decode_batch(f);
  double l = 0.0;
  for (std::size_t t = 0; t < batch.size(); ++t) l += (recon[t] - batch[t]).squaredNorm();
  l += lambda * (f * cc.decoder_norm_sum()).sum();
  return l / static_cast<double>(z.rows());
}

/// Mean over samples of the reconstruction error summed over snapshots.
inline double reconstruction_error(const Crosscoder& cc, const ActivationDataset& data) {
  const Matrix codes = cc.encode_batch(data.acts);
  const std::vector<Matrix> recon = cc.decode_batch(codes);
  double e = 0.0;
  for (std::size_t t = 0; t < recon.size(); ++t) e += (recon[t] - data.acts[t]).squaredNorm();
  return e / static_cast<double>(data.size());
}

struct CrosscoderTrainReport {
  std::vector<double> batch_loss;
  std::vector<double> reconstruction;  // before training, then after each epoch
  std::vector<double> lambda;          // per optimizer step
  Index dead_latents = 0;              // never selected on the training set at the end
};

/// sparsity weight at optimizer step `step` (0-based) of `total`
inline double lambda_schedule(long step, long total, double lambda_max, double warmup_fraction) {
  const double warm = warmup_fraction * static_cast<double>(total);
  if (warm <= 0.0) return lambda_max;
  return lambda_max * std::min(1.0, static_cast<double>(step) / warm);
}

inline Index count_dead_latents(const Crosscoder& cc, const ActivationDataset& data) {
  const Matrix codes = cc.encode_batch(data.acts);
  Index dead = 0;
  for (Index i = 0; i < codes.cols(); ++i)
    if ((codes.col(i).array() != 0.0).count() == 0) ++dead;
  return dead;
}

/// Minibatch Adam training on a fresh state (or continuing `state` if given).
inline Crosscoder train_crosscoder(const ActivationDataset& data, const CrosscoderConfig& cfg,
                                   CrosscoderTrainReport* report = nullptr, const Crosscoder* start = nullptr) {
  data.validate();
  detail::require(cfg.batch_size >= 1, "train_crosscoder: batch size must be positive");
  detail::require(cfg.epochs >= 0, "train_crosscoder: epochs must be >= 0");
  detail::require(cfg.learning_rate > 0.0, "train_crosscoder: learning rate must be positive");
  detail::require(cfg.lambda_max >= 0.0, "train_crosscoder: lambda_max must be nonnegative");
  Rng rng(cfg.seed, 0xc0de);
  const Index d_cross = cfg.d_cross > 0 ? cfg.d_cross : (3 * data.d_model()) / 2;
  Crosscoder cc = start ? *start : Crosscoder::init(data.snapshot_ids, data.d_model(), d_cross, cfg.k, rng);

  CrosscoderTrainReport local;
  CrosscoderTrainReport& rep = report ? *report : local;
  rep = {};
  rep.reconstruction.push_back(reconstruction_error(cc, data));

  const Index n = data.size();
  const Index per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long total = static_cast<long>(per_epoch) * cfg.epochs;
  Adam adam(cfg.adam);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  long step = 0;
  const std::size_t nt = static_cast<std::size_t>(cc.snapshots());

  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (Index b = 0; b < per_epoch; ++b) {
      const Index lo = b * cfg.batch_size;
      const Index hi = std::min(n, lo + cfg.batch_size);
      const std::vector<Index> ids(order.begin() + lo, order.begin() + hi);
      const double lambda = lambda_schedule(step, total, cfg.lambda_max, cfg.warmup_fraction);
      CrosscoderGradients g = crosscoder_gradients(cc, data.rows(ids), lambda);
      if (!std::isfinite(g.loss)) throw DivergenceError("crosscoder training diverged at step " + std::to_string(step));
      rep.batch_loss.push_back(g.loss);
      rep.lambda.push_back(lambda);

      Matrix b_enc = cc.encoder_bias();
      Matrix g_b_enc = g.b_enc;
      std::vector<Matrix> b_dec(cc.decoder_biases().begin(), cc.decoder_biases().end());
      std::vector<Matrix> g_b_dec(g.b_dec.begin(), g.b_dec.end());
      std::vector<Matrix*> params;
      std::vector<const Matrix*> grads;
      for (std::size_t t = 0; t < nt; ++t) {
        params.push_back(&cc.encoders()[t]);
        grads.push_back(&g.w_enc[t]);
        params.push_back(&cc.decoders()[t]);
        grads.push_back(&g.w_dec[t]);
        params.push_back(&b_dec[t]);
        grads.push_back(&g_b_dec[t]);
      }
      params.push_back(&b_enc);
      grads.push_back(&g_b_enc);
      adam.step(params, grads, std::vector<double>(params.size(), cfg.learning_rate));
      cc.encoder_bias() = b_enc.col(0);
      for (std::size_t t = 0; t < nt; ++t) cc.decoder_biases()[t] = b_dec[t].col(0);
      ++step;
    }
    rep.reconstruction.push_back(reconstruction_error(cc, data));
  }
  rep.dead_latents = count_dead_latents(cc, data);
  return cc;
}

/// Per-latent statistics of one task across every snapshot of a crosscoder.
struct FeatureTracks {
  std::vector<int> snapshot_ids;
  Vector beta_hat;                 // mean(y * f_i) on the task's inputs
  Vector frequency;                // fraction of task inputs with f_i > 0
  std::vector<Vector> norm;        // per snapshot, |W_dec,i|
  std::vector<Vector> capacity;    // per snapshot, normalized capacity within that decoder
  std::vector<Vector> gamma;       // per snapshot, probe^T W_dec,i
  std::vector<Vector> importance;  // per snapshot, beta_hat_i * gamma_i

  Index slot(int snapshot_id) const {
    const auto it = std::find(snapshot_ids.begin(), snapshot_ids.end(), snapshot_id);
    if (it == snapshot_ids.end()) throw std::out_of_range("FeatureTracks: unknown snapshot id " + std::to_string(snapshot_id));
    return it - snapshot_ids.begin();
  }
};

/// `probes[k]` reads snapshot k of the crosscoder; `labels` has one entry per
/// input of `task_data`.
inline FeatureTracks track_features(const Crosscoder& cc, const ActivationDataset& task_data,
                                    const std::vector<ReadoutVector>& probes, const Vector& labels) {
  task_data.validate();
  detail::require(static_cast<Index>(probes.size()) == cc.snapshots(), "track_features: need one probe per snapshot");
  if (labels.size() != task_data.size()) {
    throw std::invalid_argument("track_features: missing labels (" + std::to_string(labels.size()) + " for " +
                                std::to_string(task_data.size()) + " inputs)");
  }
  const Matrix codes = cc.encode_batch(task_data.acts);
  const double inv_n = 1.0 / static_cast<double>(codes.rows());
  FeatureTracks tr;
  tr.snapshot_ids = cc.snapshot_ids();
  tr.beta_hat = codes.transpose() * labels * inv_n;
  tr.frequency = (codes.array() > 0.0).cast<double>().colwise().sum().transpose() * inv_n;
  for (Index t = 0; t < cc.snapshots(); ++t) {
    const Matrix& dec = cc.decoder(t);
    detail::require(probes[static_cast<std::size_t>(t)].size() == dec.rows(), "track_features: probe length mismatch");
    tr.norm.push_back(dec.colwise().norm().transpose());
    tr.capacity.push_back(normalized_capacity_of(dec));
    tr.gamma.push_back(dec.transpose() * probes[static_cast<std::size_t>(t)]);
    tr.importance.push_back(tr.beta_hat.cwiseProduct(tr.gamma.back()));
  }
  return tr;
}

/// The `count` latents with the largest importance at a snapshot (lower
/// index first among equals).
inline std::vector<Index> top_features(const FeatureTracks& tr, int snapshot_id, int count = 5) {
  const Vector& imp = tr.importance[static_cast<std::size_t>(tr.slot(snapshot_id))];
  std::vector<Index> ids(static_cast<std::size_t>(imp.size()));
  std::iota(ids.begin(), ids.end(), Index{0});
  std::stable_sort(ids.begin(), ids.end(), [&](Index a, Index b) { return imp(a) > imp(b); });
  ids.resize(static_cast<std::size_t>(std::min<Index>(count, imp.size())));
  return ids;
}

struct InterventionProbes {
  ReadoutVector intervened;  // sum_i I_i(m_t) W_dec,i(m_T)
  ReadoutVector random;      // same columns, N(0, 1) weights
  ReadoutVector original;    // the task's own probe, unchanged
};

/// Rebuild a readout for a later snapshot from the latest decoder directions
/// of the selected latents, weighted by their importance when the task was
/// learned.
inline InterventionProbes intervention_probe(const Crosscoder& cc, const FeatureTracks& tracks,
                                             const std::vector<Index>& selected, int base_snapshot,
                                             int target_snapshot, const ReadoutVector& original,
                                             std::uint64_t seed = 0) {
  const Vector& imp = tracks.importance[static_cast<std::size_t>(tracks.slot(base_snapshot))];
  const Matrix& dec = cc.decoder(cc.slot(target_snapshot));
  Rng rng(seed, 0x5a4d);
  InterventionProbes p;
  p.intervened = Vector::Zero(dec.rows());
  p.random = Vector::Zero(dec.rows());
  for (Index i : selected) {
    detail::require(i >= 0 && i < dec.cols(), "intervention_probe: latent index out of range");
    p.intervened += imp(i) * dec.col(i);
    p.random += rng.normal() * dec.col(i);
  }
  p.original = original;
  return p;
}

/// Fraction of inputs where the centered readout and the centered label
/// have the same sign. Invariant to the scale of the readout.
inline double sign_accuracy(const Matrix& acts, const ReadoutVector& probe, const Vector& labels) {
  detail::require(acts.rows() == labels.size(), "sign_accuracy: label count mismatch");
  detail::require(acts.cols() == probe.size(), "sign_accuracy: probe length mismatch");
  const Vector pred = acts * probe;
  const double pm = pred.mean();
  const double ym = labels.mean();
  Index hit = 0;
  for (Index s = 0; s < pred.size(); ++s) hit += ((pred(s) - pm) > 0.0) == ((labels(s) - ym) > 0.0) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

/// Activations built as nonnegative sparse combinations of known unit
/// directions, one dictionary per snapshot.
struct PlantedActivations {
  ActivationDataset data;
  std::vector<Matrix> dictionaries;  // d_model x n_planted per snapshot
  Matrix codes;                      // N x n_planted
};

inline PlantedActivations make_planted_activations(Index d_model, Index n_planted, Index n_samples,
                                                   double active_prob, int snapshots, std::uint64_t seed) {
  detail::require(snapshots >= 1, "make_planted_activations: need at least one snapshot");
  detail::require(active_prob > 0.0 && active_prob <= 1.0, "make_planted_activations: active_prob must be in (0, 1]");
  Rng rng(seed, 0x91a7);
  PlantedActivations p;
  p.codes = Matrix::Zero(n_samples, n_planted);
  for (Index s = 0; s < n_samples; ++s)
    for (Index i = 0; i < n_planted; ++i)
      if (rng.uniform() < active_prob) p.codes(s, i) = rng.uniform(0.5, 1.5);
  for (int t = 0; t < snapshots; ++t) {
    Matrix d = rng.normal_matrix(d_model, n_planted);
    for (Index i = 0; i < n_planted; ++i) d.col(i).normalize();
    p.data.snapshot_ids.push_back(t);
    p.data.acts.push_back(p.codes * d.transpose());
    p.dictionaries.push_back(std::move(d));
  }
  return p;
}

/// Number of planted directions matched by some decoder column with
/// |cosine| above `threshold`, matching greedily by best cosine first.
inline Index count_recovered(const Matrix& decoder, const Matrix& planted, double threshold = 0.9) {
  Matrix dec = decoder;
  for (Index i = 0; i < dec.cols(); ++i) {
    const double n = dec.col(i).norm();
    if (n > 0.0) dec.col(i) /= n;
  }
  Matrix pl = planted;
  for (Index i = 0; i < pl.cols(); ++i) pl.col(i).normalize();
  const Matrix cos = (pl.transpose() * dec).cwiseAbs();  // planted x latents
  std::vector<bool> used_p(static_cast<std::size_t>(cos.rows()), false);
  std::vector<bool> used_l(static_cast<std::size_t>(cos.cols()), false);
  Index found = 0;
  for (Index round = 0; round < std::min(cos.rows(), cos.cols()); ++round) {
    double best = -1.0;
    Index bp = -1, bl = -1;
    for (Index a = 0; a < cos.rows(); ++a) {
      if (used_p[static_cast<std::size_t>(a)]) continue;
      for (Index b = 0; b < cos.cols(); ++b) {
        if (!used_l[static_cast<std::size_t>(b)] && cos(a, b) > best) {
          best = cos(a, b);
          bp = a;
          bl = b;
        }
      }
    }
    if (best <= threshold) break;
    used_p[static_cast<std::size_t>(bp)] = true;
    used_l[static_cast<std::size_t>(bl)] = true;
    ++found;
  }
  return found;
}

enum class ShiftKind { rotation, fading };

inline std::string to_string(ShiftKind k) { return k == ShiftKind::rotation ? "rotation" : "fading"; }

/// Two snapshots of a layer with a known dictionary and an exactly
/// constructed crosscoder. Snapshot 1 either rotates the whole dictionary
/// (norms and overlaps kept) or shrinks the task's feature vectors in place.
/// Both snapshots carry the same isotropic noise level, so fading lowers the
/// signal-to-noise ratio of the task's features. Task contributions are
/// positive: the task's features indicate it.
struct ShiftScenario {
  Crosscoder crosscoder;
  ActivationDataset data;        // snapshots 0 and 1
  Vector labels;                 // y = beta^T codes, unchanged by the shift
  ReadoutVector probe;           // least-squares readout fitted on snapshot 0
  std::vector<Index> task_features;
};

inline ShiftScenario make_shift_scenario(ShiftKind kind, std::uint64_t seed, Index d_model = 32, Index d_cross = 48,
                                         Index n_planted = 24, Index n_task = 6, Index n_samples = 4000,
                                         int active = 3, double fade = 0.05, double noise = 0.1) {
  detail::require(n_planted <= d_model, "make_shift_scenario: planted directions must be linearly independent");
  detail::require(n_planted <= d_cross && n_task <= n_planted, "make_shift_scenario: inconsistent sizes");
  detail::require(active >= 1 && active <= n_planted, "make_shift_scenario: bad active count");
  Rng rng(seed, 0x5417);
  Matrix d0 = rng.normal_matrix(d_model, n_planted);
  for (Index i = 0; i < n_planted; ++i) d0.col(i).normalize();
  Matrix d1 = d0;
  if (kind == ShiftKind::rotation) {
    Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(d_model, d_model));
    const Matrix q = qr.householderQ();
    d1 = q * d0;
  } else {
    d1.leftCols(n_task) *= fade;
  }

  ShiftScenario sc;
  Matrix codes = Matrix::Zero(n_samples, n_planted);
  std::vector<Index> perm(static_cast<std::size_t>(n_planted));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index s = 0; s < n_samples; ++s) {
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    for (int a = 0; a < active; ++a) codes(s, perm[static_cast<std::size_t>(a)]) = rng.uniform(0.5, 1.5);
  }
  Vector beta = Vector::Zero(n_planted);
  for (Index i = 0; i < n_task; ++i) {
    beta(i) = 0.5 + std::abs(rng.normal());
    sc.task_features.push_back(i);
  }
  sc.labels = codes * beta;
  sc.data.snapshot_ids = {0, 1};
  sc.data.acts = {codes * d0.transpose() + rng.normal_matrix(n_samples, d_model, noise),
                  codes * d1.transpose() + rng.normal_matrix(n_samples, d_model, noise)};
  sc.probe = pseudo_inverse(sc.data.acts[0]) * sc.labels;

  auto pad_dec = [&](const Matrix& d) {
    Matrix w = Matrix::Zero(d_model, d_cross);
    w.leftCols(n_planted) = d;
    return w;
  };
  auto pad_enc = [&](const Matrix& d) {
    Matrix w = Matrix::Zero(d_cross, d_model);
    w.topRows(n_planted) = 0.5 * pseudo_inverse(d);
    return w;
  };
  sc.crosscoder = Crosscoder::from_parameters({0, 1}, {pad_enc(d0), pad_enc(d1)}, Vector::Zero(d_cross),
                                              {pad_dec(d0), pad_dec(d1)},
                                              {Vector::Zero(d_model), Vector::Zero(d_model)},
                                              std::max(active, 6));
  return sc;
}

// Binary activation file, little-endian:
//   8 bytes  magic "FLACTV01"
//   uint32   snapshot count T
//   uint32   d_model
//   uint64   sample count N
//   int32    snapshot ids [T]
//   float32  T matrices of N x d_model, row-major
namespace detail {

inline constexpr char kActivationMagic[8] = {'F', 'L', 'A', 'C', 'T', 'V', '0', '1'};

template <typename T>
using bits_of = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

template <typename T>
void put_le(std::ostream& os, T v) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  unsigned char b[sizeof(T)];
  bits_of<T> bits = 0;
  std::memcpy(&bits, &v, sizeof(T));
  for (std::size_t k = 0; k < sizeof(T); ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw std::runtime_error("activation file truncated");
  bits_of<T> bits = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) bits |= static_cast<bits_of<T>>(static_cast<bits_of<T>>(b[k]) << (8 * k));
  T v;
  std::memcpy(&v, &bits, sizeof(T));
  return v;
}

}  // namespace detail

inline void write_activations(const std::string& path, const ActivationDataset& data) {
  data.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write(detail::kActivationMagic, 8);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(data.snapshots()));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(data.d_model()));
  detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(data.size()));
  for (int id : data.snapshot_ids) detail::put_le<std::int32_t>(os, id);
  for (const Matrix& a : data.acts)
    for (Index s = 0; s < a.rows(); ++s)
      for (Index j = 0; j < a.cols(); ++j) detail::put_le<float>(os, static_cast<float>(a(s, j)));
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

inline ActivationDataset read_activations(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kActivationMagic, 8) != 0) {
    throw std::runtime_error("'" + path + "' is not an activation file");
  }
  const auto t = detail::get_le<std::uint32_t>(is);
  const auto d = detail::get_le<std::uint32_t>(is);
  const auto n = detail::get_le<std::uint64_t>(is);
  ActivationDataset data;
  for (std::uint32_t k = 0; k < t; ++k) data.snapshot_ids.push_back(detail::get_le<std::int32_t>(is));
  for (std::uint32_t k = 0; k < t; ++k) {
    Matrix a(static_cast<Index>(n), static_cast<Index>(d));
    for (Index s = 0; s < a.rows(); ++s)
      for (Index j = 0; j < a.cols(); ++j) a(s, j) = detail::get_le<float>(is);
    data.acts.push_back(std::move(a));
  }
  data.validate();
  return data;
}

}  // namespace forgetlab

#endif  // FORGETLAB_CROSSCODER_HPP
