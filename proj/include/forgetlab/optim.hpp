#ifndef FORGETLAB_OPTIM_HPP
#define FORGETLAB_OPTIM_HPP

#include <cmath>
#include <string>
#include <vector>

#include "forgetlab/core.hpp"

namespace forgetlab {

enum class OptimizerKind { plain_gd, adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "plain_gd"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "plain_gd" || s == "gd" || s == "sgd") return OptimizerKind::plain_gd;
  throw std::invalid_argument("unknown optimizer '" + s + "' (expected adam|plain_gd)");
}

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Element-wise Adam over a fixed list of parameter matrices.
class Adam {
 public:
  explicit Adam(AdamParams params = {}) : params_(params) {}

  void reset() {
    m_.clear();
    v_.clear();
    t_ = 0;
  }

  long steps() const { return t_; }

  /// params[k] -= lr[k] * mhat / (sqrt(vhat) + eps)
  void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
            const std::vector<double>& lrs) {
    if (m_.size() != params.size()) {
      m_.clear();
      v_.clear();
      for (const Matrix* p : params) {
        m_.push_back(Matrix::Zero(p->rows(), p->cols()));
        v_.push_back(Matrix::Zero(p->rows(), p->cols()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      const Matrix& g = *grads[k];
      m_[k] = params_.beta1 * m_[k] + (1.0 - params_.beta1) * g;
      v_[k] = params_.beta2 * v_[k] + (1.0 - params_.beta2) * g.cwiseProduct(g);
      params[k]->array() -=
          lrs[k] * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + params_.epsilon);
    }
  }

 private:
  AdamParams params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

}  // namespace forgetlab

#endif  // FORGETLAB_OPTIM_HPP
