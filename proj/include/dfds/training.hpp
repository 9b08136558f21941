#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "dfds/data.hpp"
#include "dfds/error.hpp"
#include "dfds/features.hpp"
#include "dfds/numerics.hpp"

namespace dfds::training {

using data::Window;
using features::ProfileSet;

/// Adam moments for every parameter block, in visiting order.
template <typename Scalar>
struct AdamState {
  std::vector<MatrixX<Scalar>> m, v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  template <typename Params>
  static AdamState for_params(Params& params, double lr) {
    AdamState s;
    s.lr = lr;
    for (const auto& b : collect_blocks(params)) {
      s.m.push_back(MatrixX<Scalar>::Zero(b.value->rows(), b.value->cols()));
      s.v.push_back(MatrixX<Scalar>::Zero(b.value->rows(), b.value->cols()));
    }
    return s;
  }
};

/// t += 1; m = b1 m + (1-b1) g; v = b2 v + (1-b2) g^2;
/// theta -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
/// Throws NumericalError naming the first block with a non-finite gradient.
template <typename Params>
void adam_step(Params& params, Params& grads, AdamState<typename Params::Scalar>& state) {
  using Scalar = typename Params::Scalar;
  auto p = collect_blocks(params);
  auto g = collect_blocks(grads);
  if (p.size() != g.size() || p.size() != state.m.size()) {
    throw ShapeError("adam_step: parameter, gradient and state block counts differ");
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k].value->rows() != g[k].value->rows() || p[k].value->cols() != g[k].value->cols()) {
      throw ShapeError("adam_step: gradient for '" + p[k].name + "' has shape " +
                       shape_string(*g[k].value) + ", parameter " + shape_string(*p[k].value));
    }
    if (!g[k].value->allFinite()) {
      throw NumericalError("adam_step: non-finite gradient in block '" + p[k].name + "'");
    }
  }
  ++state.step;
  const Scalar b1 = Scalar(state.beta1);
  const Scalar b2 = Scalar(state.beta2);
  const Scalar c1 = Scalar(1) - Scalar(std::pow(state.beta1, static_cast<double>(state.step)));
  const Scalar c2 = Scalar(1) - Scalar(std::pow(state.beta2, static_cast<double>(state.step)));
  const Scalar lr = Scalar(state.lr);
  const Scalar eps = Scalar(state.eps);
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    const auto& grad = *g[k].value;
    m = b1 * m + (Scalar(1) - b1) * grad;
    v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
    p[k].value->array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

struct TrainConfig {
  int epochs = 20;
  double lr = 1e-3;
  int batch_size = 64;
  std::uint64_t seed = 1;
  bool shuffle = true;
  /// Rescale the batch gradient to this global L2 norm when exceeded.
  std::optional<double> grad_clip_norm;
  /// Batch gradients are split into this many contiguous chunks and summed
  /// in chunk order, so results depend on the declared count only.
  int threads = 1;

  void validate() const {
    if (epochs < 1) throw UsageError("epochs must be >= 1");
    if (!(lr > 0.0)) throw UsageError("learning rate must be positive");
    if (batch_size < 1) throw UsageError("batch size must be >= 1");
    if (threads < 1) throw UsageError("threads must be >= 1");
  }
};

struct TrainResult {
  std::vector<double> loss_history;  // mean window loss per epoch
  long adam_steps = 0;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Trainable models expose `Params`, `zero_like()`, `params` and
/// `loss_and_gradient(windows, profiles, grad, scale)`.
template <typename Model>
concept Trainable = requires(const Model& cm, Model& m, std::span<const Window* const> w,
                             const ProfileSet& prof, typename Model::Params& g) {
  { cm.zero_like() } -> std::same_as<typename Model::Params>;
  { cm.loss_and_gradient(w, prof, g, typename Model::Scalar(1)) };
  m.params;
};

namespace detail {

template <typename Params>
void add_into(Params& dst, Params& src) {
  auto d = collect_blocks(dst);
  auto s = collect_blocks(src);
  for (std::size_t k = 0; k < d.size(); ++k) *d[k].value += *s[k].value;
}

template <typename Params>
double global_norm(Params& p) {
  double sq = 0.0;
  for (const auto& b : collect_blocks(p)) sq += static_cast<double>(b.value->squaredNorm());
  return std::sqrt(sq);
}

}  // namespace detail

/// Loss summed over `windows` and gradient of scale * that sum, computed in
/// `threads` contiguous chunks whose results are added in chunk order.
template <Trainable Model>
double batch_gradient(const Model& model, std::span<const Window* const> windows,
                      const ProfileSet& profiles, typename Model::Params& grad,
                      typename Model::Scalar scale, int threads) {
  const auto n = static_cast<int>(windows.size());
  const int chunks = std::max(1, std::min(threads, n));
  if (chunks == 1) {
    return static_cast<double>(model.loss_and_gradient(windows, profiles, grad, scale));
  }
  std::vector<typename Model::Params> partial(chunks, model.zero_like());
  std::vector<double> losses(chunks, 0.0);
  std::vector<std::exception_ptr> errors(chunks);
  {
    std::vector<std::jthread> pool;
    for (int c = 0; c < chunks; ++c) {
      pool.emplace_back([&, c] {
        const int lo = n * c / chunks;
        const int hi = n * (c + 1) / chunks;
        try {
          losses[c] = static_cast<double>(
              model.loss_and_gradient(windows.subspan(lo, hi - lo), profiles, partial[c], scale));
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  double loss = 0.0;
  for (int c = 0; c < chunks; ++c) {
    detail::add_into(grad, partial[c]);
    loss += losses[c];
  }
  return loss;
}

/// Mini-batch Adam on mean BCE. Per epoch: seeded shuffle, batches of
/// `batch_size` windows, one Adam step per batch. Throws NumericalError on a
/// non-finite loss, naming the epoch and batch.
template <Trainable Model>
TrainResult train(Model& model, std::span<const Window> windows, const ProfileSet& profiles,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  using Scalar = typename Model::Scalar;
  cfg.validate();
  if (windows.empty()) throw DataError("train: no training windows");

  std::vector<const Window*> order;
  order.reserve(windows.size());
  for (const auto& w : windows) order.push_back(&w);
  Rng rng = Rng(cfg.seed).fork(0x5348u);
  auto state = AdamState<Scalar>::for_params(model.params, cfg.lr);

  TrainResult result;
  const auto n = static_cast<std::ptrdiff_t>(order.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) rng.shuffle(order);
    double total = 0.0;
    int batch_index = 0;
    for (std::ptrdiff_t lo = 0; lo < n; lo += cfg.batch_size, ++batch_index) {
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, lo + cfg.batch_size);
      std::span<const Window* const> batch(order.data() + lo, static_cast<std::size_t>(hi - lo));
      auto grad = model.zero_like();
      const double loss = batch_gradient(model, batch, profiles, grad,
                                         Scalar(1) / Scalar(hi - lo), cfg.threads);
      if (!std::isfinite(loss)) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                             ", batch " + std::to_string(batch_index + 1));
      }
      if (cfg.grad_clip_norm) {
        const double norm = detail::global_norm(grad);
        if (norm > *cfg.grad_clip_norm) {
          const Scalar factor = Scalar(*cfg.grad_clip_norm / norm);
          for (const auto& b : collect_blocks(grad)) *b.value *= factor;
        }
      }
      adam_step(model.params, grad, state);
      ++result.adam_steps;
      total += loss;
    }
    result.loss_history.push_back(total / static_cast<double>(n));
    if (on_epoch) on_epoch(epoch + 1, result.loss_history.back());
  }
  return result;
}

struct GradCheckReport {
  double max_rel_err = 0.0;
  Index worst_index = -1;
  std::string worst_coordinate;
  double analytic = 0.0;
  double numeric = 0.0;
  Index coordinates = 0;
  bool pass = false;
};

/// Compares the analytic gradient of the mean window loss against central
/// differences; rel_err = |a - n| / max(|a|, |n|, 1e-8). `corrupt_index`
/// doubles one analytic coordinate (fault injection).
template <Trainable Model>
GradCheckReport gradient_check(const Model& model, std::span<const Window* const> windows,
                               const ProfileSet& profiles, double tolerance, double eps = 1e-5,
                               std::optional<Index> corrupt_index = std::nullopt) {
  using Scalar = typename Model::Scalar;
  const Scalar scale = Scalar(1) / Scalar(windows.size());
  auto grad = model.zero_like();
  model.loss_and_gradient(windows, profiles, grad, scale);
  VectorX<Scalar> analytic = flatten(grad);
  if (corrupt_index && *corrupt_index < analytic.size()) analytic[*corrupt_index] *= Scalar(2);

  Model probe = model;
  const VectorX<Scalar> base = flatten(probe.params);
  const std::function<Scalar(const VectorX<Scalar>&)> f = [&](const VectorX<Scalar>& x) {
    unflatten(x, probe.params);
    return probe.loss(windows, profiles) * scale;
  };
  const VectorX<Scalar> numeric = finite_diff_gradient<Scalar>(f, base, Scalar(eps));

  GradCheckReport report;
  report.coordinates = base.size();
  for (Index j = 0; j < base.size(); ++j) {
    using std::abs;
    const double a = static_cast<double>(analytic[j]);
    const double n = static_cast<double>(numeric[j]);
    const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
    if (rel > report.max_rel_err || report.worst_index < 0) {
      report.max_rel_err = rel;
      report.worst_index = j;
      report.analytic = a;
      report.numeric = n;
    }
  }
  report.worst_coordinate = describe_coordinate(probe.params, report.worst_index);
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace dfds::training
