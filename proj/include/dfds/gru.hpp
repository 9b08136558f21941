#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dfds/numerics.hpp"

namespace dfds::model {

/// GRU weights for hidden size d and input size x.
///   z  = sigmoid(W_z x + U_z h + b_z)
///   r  = sigmoid(W_r x + U_r h + b_r)
///   h~ = tanh(W_h x + U_h (r * h) + b_h)
///   h' = (1 - z) * h + z * h~
template <typename ScalarT>
struct GruParams {
  using Scalar = ScalarT;
  using Mat = MatrixX<Scalar>;

  Mat w_z, w_r, w_h;  // d x x
  Mat u_z, u_r, u_h;  // d x d
  Mat b_z, b_r, b_h;  // d x 1

  Index hidden_size() const { return u_z.rows(); }
  Index input_size() const { return w_z.cols(); }

  static GruParams zeros(Index hidden, Index input) {
    GruParams p;
    p.w_z = p.w_r = p.w_h = Mat::Zero(hidden, input);
    p.u_z = p.u_r = p.u_h = Mat::Zero(hidden, hidden);
    p.b_z = p.b_r = p.b_h = Mat::Zero(hidden, 1);
    return p;
  }

  static GruParams glorot(Index hidden, Index input, Rng& rng) {
    GruParams p = zeros(hidden, input);
    p.w_z = glorot_init_as<Scalar>(hidden, input, rng);
    p.w_r = glorot_init_as<Scalar>(hidden, input, rng);
    p.w_h = glorot_init_as<Scalar>(hidden, input, rng);
    p.u_z = glorot_init_as<Scalar>(hidden, hidden, rng);
    p.u_r = glorot_init_as<Scalar>(hidden, hidden, rng);
    p.u_h = glorot_init_as<Scalar>(hidden, hidden, rng);
    return p;
  }

  template <typename F>
  void visit_blocks(F&& f, std::string_view prefix = "") {
    const std::string p(prefix);
    f(p + "w_z", w_z);
    f(p + "w_r", w_r);
    f(p + "w_h", w_h);
    f(p + "u_z", u_z);
    f(p + "u_r", u_r);
    f(p + "u_h", u_h);
    f(p + "b_z", b_z);
    f(p + "b_r", b_r);
    f(p + "b_h", b_h);
  }

  void check() const {
    const Index d = hidden_size();
    const Index x = input_size();
    for (const Mat* m : {&w_z, &w_r, &w_h}) require_shape(*m, d, x, "GRU input weights");
    for (const Mat* m : {&u_z, &u_r, &u_h}) require_shape(*m, d, d, "GRU recurrent weights");
    for (const Mat* m : {&b_z, &b_r, &b_h}) require_shape(*m, d, 1, "GRU bias");
  }
};

/// Activations of one batched cell step; columns are batch members.
template <typename Scalar>
struct GruCellCache {
  MatrixX<Scalar> x, h_prev, z, r, h_cand, rh;
};

namespace detail {

// Cell step with the input projections W_* x already computed.
template <typename Scalar, typename DerivedZ, typename DerivedR, typename DerivedH>
MatrixX<Scalar> gru_step(const Eigen::MatrixBase<DerivedZ>& wx_z,
                         const Eigen::MatrixBase<DerivedR>& wx_r,
                         const Eigen::MatrixBase<DerivedH>& wx_h, const MatrixX<Scalar>& h_prev,
                         const GruParams<Scalar>& p, GruCellCache<Scalar>* cache) {
  MatrixX<Scalar> pre = wx_z;
  pre.noalias() += p.u_z * h_prev;
  MatrixX<Scalar> z = sigmoid((pre.colwise() + p.b_z.col(0)).eval());
  pre = wx_r;
  pre.noalias() += p.u_r * h_prev;
  MatrixX<Scalar> r = sigmoid((pre.colwise() + p.b_r.col(0)).eval());
  MatrixX<Scalar> rh = r.cwiseProduct(h_prev);
  pre = wx_h;
  pre.noalias() += p.u_h * rh;
  MatrixX<Scalar> h_cand = tanh_exp((pre.colwise() + p.b_h.col(0)).eval());
  MatrixX<Scalar> h = h_prev + z.cwiseProduct(h_cand - h_prev);
  if (cache != nullptr) {
    cache->h_prev = h_prev;
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->h_cand = std::move(h_cand);
    cache->rh = std::move(rh);
  }
  return h;
}

// Gate pre-activation gradients of one step.
template <typename Scalar>
struct GateGrads {
  MatrixX<Scalar> z, r, h;
};

// Backward through the recurrent part of one step: accumulates U and b
// gradients, fills the gate gradients and returns d(h_prev).
template <typename Scalar>
MatrixX<Scalar> gru_step_backward(const MatrixX<Scalar>& dh, const GruCellCache<Scalar>& c,
                                  const GruParams<Scalar>& p, GruParams<Scalar>& grad,
                                  GateGrads<Scalar>& gates) {
  using Mat = MatrixX<Scalar>;
  const auto one = Scalar(1);
  gates.z = (dh.array() * (c.h_cand - c.h_prev).array() * c.z.array() * (one - c.z.array()))
                .matrix();
  gates.h = (dh.array() * c.z.array() * (one - c.h_cand.array().square())).matrix();
  Mat d_rh = p.u_h.transpose() * gates.h;
  gates.r = (d_rh.array() * c.h_prev.array() * c.r.array() * (one - c.r.array())).matrix();

  grad.u_z.noalias() += gates.z * c.h_prev.transpose();
  grad.u_r.noalias() += gates.r * c.h_prev.transpose();
  grad.u_h.noalias() += gates.h * c.rh.transpose();
  grad.b_z += gates.z.rowwise().sum();
  grad.b_r += gates.r.rowwise().sum();
  grad.b_h += gates.h.rowwise().sum();

  Mat dh_prev = (dh.array() * (one - c.z.array()) + d_rh.array() * c.r.array()).matrix();
  dh_prev.noalias() += p.u_z.transpose() * gates.z;
  dh_prev.noalias() += p.u_r.transpose() * gates.r;
  return dh_prev;
}

}  // namespace detail

/// One batched step: x is (input x B), h_prev is (hidden x B).
template <typename Scalar>
MatrixX<Scalar> gru_cell_forward(const MatrixX<Scalar>& x, const MatrixX<Scalar>& h_prev,
                                 const GruParams<Scalar>& p, GruCellCache<Scalar>* cache = nullptr) {
  if (x.rows() != p.input_size() || h_prev.rows() != p.hidden_size() || x.cols() != h_prev.cols()) {
    throw ShapeError("gru_cell_forward: input " + shape_string(x) + " and state " +
                     shape_string(h_prev) + " do not fit a cell with input " +
                     std::to_string(p.input_size()) + " and hidden " +
                     std::to_string(p.hidden_size()));
  }
  if (cache != nullptr) cache->x = x;
  return detail::gru_step<Scalar>(p.w_z * x, p.w_r * x, p.w_h * x, h_prev, p, cache);
}

/// Backpropagates `dh` through one cell step. Parameter gradients are
/// accumulated into `grad`; returns the gradient with respect to h_prev.
/// `dx` receives the input gradient when non-null.
template <typename Scalar>
MatrixX<Scalar> gru_cell_backward(const MatrixX<Scalar>& dh, const GruCellCache<Scalar>& c,
                                  const GruParams<Scalar>& p, GruParams<Scalar>& grad,
                                  MatrixX<Scalar>* dx = nullptr) {
  detail::GateGrads<Scalar> gates;
  MatrixX<Scalar> dh_prev = detail::gru_step_backward(dh, c, p, grad, gates);
  grad.w_z.noalias() += gates.z * c.x.transpose();
  grad.w_r.noalias() += gates.r * c.x.transpose();
  grad.w_h.noalias() += gates.h * c.x.transpose();
  if (dx != nullptr) {
    *dx = p.w_z.transpose() * gates.z;
    dx->noalias() += p.w_r.transpose() * gates.r;
    dx->noalias() += p.w_h.transpose() * gates.h;
  }
  return dh_prev;
}

/// Encoder-side cache: inputs stacked as (input x T*B), step t in columns
/// [t*B, (t+1)*B).
template <typename Scalar>
struct GruSequenceCache {
  MatrixX<Scalar> inputs;
  std::vector<GruCellCache<Scalar>> cells;
};

/// Runs the cell over `inputs` from a zero state; returns the final state.
/// Input projections for all steps are computed in one product per gate.
template <typename Scalar>
MatrixX<Scalar> gru_sequence_forward(const std::vector<MatrixX<Scalar>>& inputs,
                                     const GruParams<Scalar>& p,
                                     GruSequenceCache<Scalar>* cache = nullptr) {
  if (inputs.empty()) throw ShapeError("gru_sequence_forward: empty input sequence");
  const Index B = inputs.front().cols();
  const auto T = static_cast<Index>(inputs.size());
  MatrixX<Scalar> stacked(p.input_size(), T * B);
  for (Index t = 0; t < T; ++t) {
    if (inputs[t].rows() != p.input_size() || inputs[t].cols() != B) {
      throw ShapeError("gru_sequence_forward: step " + std::to_string(t) + " input " +
                       shape_string(inputs[t]) + " does not fit input size " +
                       std::to_string(p.input_size()) + " and batch " + std::to_string(B));
    }
    stacked.middleCols(t * B, B) = inputs[t];
  }
  const MatrixX<Scalar> wx_z = p.w_z * stacked;
  const MatrixX<Scalar> wx_r = p.w_r * stacked;
  const MatrixX<Scalar> wx_h = p.w_h * stacked;
  MatrixX<Scalar> h = MatrixX<Scalar>::Zero(p.hidden_size(), B);
  if (cache != nullptr) cache->cells.resize(T);
  for (Index t = 0; t < T; ++t) {
    h = detail::gru_step<Scalar>(wx_z.middleCols(t * B, B), wx_r.middleCols(t * B, B),
                                 wx_h.middleCols(t * B, B), h, p,
                                 cache != nullptr ? &cache->cells[t] : nullptr);
  }
  if (cache != nullptr) cache->inputs = std::move(stacked);
  return h;
}

/// Backpropagation through time from the final state gradient.
template <typename Scalar>
void gru_sequence_backward(const MatrixX<Scalar>& dh_final, const GruSequenceCache<Scalar>& cache,
                           const GruParams<Scalar>& p, GruParams<Scalar>& grad) {
  const auto T = static_cast<Index>(cache.cells.size());
  const Index B = dh_final.cols();
  const Index d = p.hidden_size();
  MatrixX<Scalar> dz(d, T * B), dr(d, T * B), dhc(d, T * B);
  detail::GateGrads<Scalar> gates;
  MatrixX<Scalar> dh = dh_final;
  for (Index t = T; t-- > 0;) {
    dh = detail::gru_step_backward(dh, cache.cells[t], p, grad, gates);
    dz.middleCols(t * B, B) = gates.z;
    dr.middleCols(t * B, B) = gates.r;
    dhc.middleCols(t * B, B) = gates.h;
  }
  grad.w_z.noalias() += dz * cache.inputs.transpose();
  grad.w_r.noalias() += dr * cache.inputs.transpose();
  grad.w_h.noalias() += dhc * cache.inputs.transpose();
}

}  // namespace dfds::model
