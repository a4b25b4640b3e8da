#ifndef FORGETLAB_CORE_HPP
#define FORGETLAB_CORE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace forgetlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// A readout direction in activation space (length m).
using ReadoutVector = Vector;

/// Columns with Euclidean norm below this are treated as absent features.
inline constexpr double kZeroNorm = 1e-12;

/// Raised when arguments violate a documented precondition (shapes, ranges).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when training produces non-finite parameters or losses.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

inline std::string shape_str(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace detail

}  // namespace forgetlab

#endif  // FORGETLAB_CORE_HPP
