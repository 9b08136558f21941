#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dfds/error.hpp"

namespace dfds {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using Index = Eigen::Index;

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename Derived>
void require_shape(const Eigen::EigenBase<Derived>& m, Index rows, Index cols,
                   std::string_view what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", got " + shape_string(m));
  }
}

/// Checked matrix product. Throws ShapeError naming both operand shapes.
template <typename Scalar>
MatrixX<Scalar> matmul(const MatrixX<Scalar>& a, const MatrixX<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + shape_string(a) + " by " + shape_string(b));
  }
  return a * b;
}

enum class Activation { sigmoid, tanh, relu };

namespace detail {
template <typename Scalar>
Scalar logistic(Scalar v) {
  using std::exp;
  if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-v));
  const Scalar e = exp(v);
  return e / (Scalar(1) + e);
}
}  // namespace detail

template <std::floating_point Scalar>
Scalar sigmoid(Scalar v) {
  return detail::logistic(v);
}

template <std::floating_point Scalar>
Scalar relu(Scalar v) {
  return v > Scalar(0) ? v : Scalar(0);
}

/// Vectorised logistic; exp overflow saturates cleanly to 0 or 1.
template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) + (-x.array()).exp()).inverse().matrix();
}

/// Vectorised tanh written through exp, which Eigen vectorises for double.
template <typename Derived>
auto tanh_exp(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) - Scalar(2) * (Scalar(2) * x.array()).exp().operator+(Scalar(1)).inverse())
      .matrix();
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

template <typename Scalar>
MatrixX<Scalar> elementwise(Activation op, const MatrixX<Scalar>& x) {
  switch (op) {
    case Activation::sigmoid:
      return sigmoid(x);
    case Activation::tanh:
      return x.array().tanh().matrix();
    case Activation::relu:
      return relu(x);
  }
  return x;
}

/// Deterministic PRNG: std::mt19937_64 with hand-written distributions so
/// streams are bit-identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Independent child generator derived from this seed and a stream id.
  Rng fork(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t k = items.size(); k > 1; --k) {
      std::swap(items[k - 1], items[below(k)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// Glorot-uniform matrix: entries in [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))].
Matrix glorot_init(Index rows, Index cols, Rng& rng);

template <typename Scalar>
MatrixX<Scalar> glorot_init_as(Index rows, Index cols, Rng& rng) {
  return glorot_init(rows, cols, rng).template cast<Scalar>();
}

/// Central-difference gradient of `f` at `params`. Throws NumericalError
/// naming the coordinate if any evaluation is non-finite.
template <typename Scalar>
VectorX<Scalar> finite_diff_gradient(const std::function<Scalar(const VectorX<Scalar>&)>& f,
                                     const VectorX<Scalar>& params, Scalar eps = Scalar(1e-5)) {
  if (!(eps > Scalar(0))) throw NumericalError("finite_diff_gradient: eps must be positive");
  VectorX<Scalar> grad(params.size());
  VectorX<Scalar> probe = params;
  for (Index j = 0; j < params.size(); ++j) {
    probe[j] = params[j] + eps;
    const Scalar up = f(probe);
    probe[j] = params[j] - eps;
    const Scalar down = f(probe);
    probe[j] = params[j];
    using std::isfinite;
    if (!isfinite(up) || !isfinite(down)) {
      throw NumericalError("finite_diff_gradient: non-finite evaluation at coordinate " +
                           std::to_string(j));
    }
    grad[j] = (up - down) / (Scalar(2) * eps);
  }
  return grad;
}

/// Non-owning view of one named parameter block.
template <typename Scalar>
struct NamedBlock {
  std::string name;
  MatrixX<Scalar>* value;
};

/// Collects the named blocks of any parameter struct exposing
/// `visit_blocks(f)` with `f(std::string_view, MatrixX&)`.
template <typename Params>
auto collect_blocks(Params& params) {
  using Scalar = typename Params::Scalar;
  std::vector<NamedBlock<Scalar>> blocks;
  params.visit_blocks([&](std::string_view name, MatrixX<Scalar>& m) {
    blocks.push_back({std::string(name), &m});
  });
  return blocks;
}

template <typename Params>
Index parameter_count(Params& params) {
  Index n = 0;
  for (const auto& b : collect_blocks(params)) n += b.value->size();
  return n;
}

template <typename Params>
auto flatten(Params& params) {
  using Scalar = typename Params::Scalar;
  VectorX<Scalar> flat(parameter_count(params));
  Index offset = 0;
  for (const auto& b : collect_blocks(params)) {
    flat.segment(offset, b.value->size()) =
        Eigen::Map<const VectorX<Scalar>>(b.value->data(), b.value->size());
    offset += b.value->size();
  }
  return flat;
}

template <typename Params>
void unflatten(const VectorX<typename Params::Scalar>& flat, Params& params) {
  using Scalar = typename Params::Scalar;
  if (flat.size() != parameter_count(params)) {
    throw ShapeError("unflatten: vector length " + std::to_string(flat.size()) +
                     " does not match parameter count " +
                     std::to_string(parameter_count(params)));
  }
  Index offset = 0;
  for (const auto& b : collect_blocks(params)) {
    Eigen::Map<VectorX<Scalar>>(b.value->data(), b.value->size()) =
        flat.segment(offset, b.value->size());
    offset += b.value->size();
  }
}

/// Locates flat coordinate `index` as "block[row,col]".
template <typename Params>
std::string describe_coordinate(Params& params, Index index) {
  Index offset = 0;
  for (const auto& b : collect_blocks(params)) {
    if (index < offset + b.value->size()) {
      const Index local = index - offset;
      return b.name + "[" + std::to_string(local / b.value->cols()) + "," +
             std::to_string(local % b.value->cols()) + "]";
    }
    offset += b.value->size();
  }
  return "<out of range>";
}

}  // namespace dfds
