#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "dfds/numerics.hpp"

namespace dfds::model {

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean binary cross-entropy of one window; predictions are clamped to
/// [1e-7, 1 - 1e-7] before the logarithm.
double bce_loss(std::span<const double> preds, std::span<const std::uint8_t> targets);

/// Sum over batch columns of the per-column mean BCE. preds/targets are (o x B).
template <typename Scalar>
Scalar bce_sum(const MatrixX<Scalar>& preds, const MatrixX<Scalar>& targets) {
  if (preds.rows() != targets.rows() || preds.cols() != targets.cols()) {
    throw ShapeError("bce: predictions " + shape_string(preds) + " vs targets " +
                     shape_string(targets));
  }
  using std::log;
  const Scalar lo = Scalar(kProbabilityClamp);
  const Scalar hi = Scalar(1) - lo;
  Scalar total = 0;
  for (Index r = 0; r < preds.rows(); ++r) {
    for (Index c = 0; c < preds.cols(); ++c) {
      const Scalar p = std::clamp(preds(r, c), lo, hi);
      const Scalar y = targets(r, c);
      total -= y * log(p) + (Scalar(1) - y) * log(Scalar(1) - p);
    }
  }
  return total / Scalar(preds.rows());
}

/// scale * d(bce_sum)/d(preds). Zero where the clamp is active.
template <typename Scalar>
MatrixX<Scalar> bce_grad(const MatrixX<Scalar>& preds, const MatrixX<Scalar>& targets,
                         Scalar scale) {
  const Scalar lo = Scalar(kProbabilityClamp);
  const Scalar hi = Scalar(1) - lo;
  const Scalar k = scale / Scalar(preds.rows());
  MatrixX<Scalar> g(preds.rows(), preds.cols());
  for (Index r = 0; r < preds.rows(); ++r) {
    for (Index c = 0; c < preds.cols(); ++c) {
      const Scalar p = preds(r, c);
      const Scalar y = targets(r, c);
      g(r, c) = (p < lo || p > hi) ? Scalar(0) : k * ((Scalar(1) - y) / (Scalar(1) - p) - y / p);
    }
  }
  return g;
}

}  // namespace dfds::model
