#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfds/dfds.hpp"
#include "dfds/gru.hpp"
#include "dfds/loss.hpp"
#include "dfds/numerics.hpp"

// Gradient-trained baselines operating on the occupancy sequence alone.
namespace dfds::model {

/// Sizes shared by the occupancy-only baselines.
struct SequenceConfig {
  int input_len = 64;
  int output_len = 32;
  int hidden = 100;

  void validate() const {
    if (input_len < 1 || output_len < 1 || hidden < 1) {
      throw ShapeError("sequence model: input_len, output_len and hidden must be >= 1");
    }
  }
};

namespace detail {

template <typename Scalar>
void check_horizons(const SequenceConfig& cfg, const Window& w, std::string_view model) {
  if (w.input_len() != cfg.input_len || w.output_len() != cfg.output_len) {
    throw ShapeError(std::string(model) + ": window horizons (" + std::to_string(w.input_len()) +
                     ", " + std::to_string(w.output_len()) + ") do not match model (" +
                     std::to_string(cfg.input_len) + ", " + std::to_string(cfg.output_len) + ")");
  }
}

/// Input bits as (i x B) and targets as (o x B).
template <typename Scalar>
void occupancy_matrices(const SequenceConfig& cfg, std::span<const Window* const> windows,
                        std::string_view model, MatrixX<Scalar>& inputs, MatrixX<Scalar>& targets) {
  const auto B = static_cast<Index>(windows.size());
  inputs.resize(cfg.input_len, B);
  targets.resize(cfg.output_len, B);
  for (Index b = 0; b < B; ++b) {
    const Window& w = *windows[b];
    check_horizons<Scalar>(cfg, w, model);
    for (int t = 0; t < cfg.input_len; ++t) inputs(t, b) = Scalar(w.input_occ[t]);
    for (int t = 0; t < cfg.output_len; ++t) targets(t, b) = Scalar(w.target_occ[t]);
  }
}

/// Row t of `inputs` as a (1 x B) step for an x=1 GRU.
template <typename Scalar>
std::vector<MatrixX<Scalar>> occupancy_steps(const MatrixX<Scalar>& inputs) {
  std::vector<MatrixX<Scalar>> steps;
  steps.reserve(inputs.rows());
  for (Index t = 0; t < inputs.rows(); ++t) steps.emplace_back(inputs.row(t));
  return steps;
}

/// Glorot for every block whose last path component does not start with 'b'.
template <typename Params>
void glorot_weights(Params& p, Rng& rng) {
  p.visit_blocks([&](std::string_view name, auto& m) {
    const auto slash = name.rfind('/');
    const std::string_view leaf = slash == std::string_view::npos ? name : name.substr(slash + 1);
    if (!leaf.starts_with('b')) {
      m = glorot_init_as<typename Params::Scalar>(m.rows(), m.cols(), rng);
    }
  });
}

}  // namespace detail

// ---- logistic regression: o independent heads over the i input bits ----

template <typename ScalarT>
struct LogRegParams {
  using Scalar = ScalarT;
  DenseLayer<Scalar> head;  // o x i

  template <typename F>
  void visit_blocks(F&& f) {
    head.visit_blocks(f, "logreg/");
  }
};

template <typename ScalarT>
struct LogRegModel {
  using Scalar = ScalarT;
  using Params = LogRegParams<Scalar>;
  using Config = SequenceConfig;
  static constexpr std::string_view kName = "logreg";

  SequenceConfig config;
  Params params;

  static Params zeros(const SequenceConfig& cfg) {
    cfg.validate();
    return {DenseLayer<Scalar>::zeros(cfg.output_len, cfg.input_len)};
  }
  static LogRegModel initialized(const SequenceConfig& cfg, Rng& rng) {
    LogRegModel m{cfg, zeros(cfg)};
    detail::glorot_weights(m.params, rng);
    return m;
  }
  Params zero_like() const { return zeros(config); }

  MatrixX<Scalar> predict(std::span<const Window* const> windows, const ProfileSet&) const {
    MatrixX<Scalar> x, y;
    detail::occupancy_matrices<Scalar>(config, windows, kName, x, y);
    return sigmoid(params.head.apply(x));
  }

  Scalar loss(std::span<const Window* const> windows, const ProfileSet&) const {
    MatrixX<Scalar> x, y;
    detail::occupancy_matrices<Scalar>(config, windows, kName, x, y);
    return bce_sum(MatrixX<Scalar>(sigmoid(params.head.apply(x))), y);
  }

  Scalar loss_and_gradient(std::span<const Window* const> windows, const ProfileSet&,
                           Params& grad, Scalar scale) const {
    MatrixX<Scalar> x, y;
    detail::occupancy_matrices<Scalar>(config, windows, kName, x, y);
    const MatrixX<Scalar> p = sigmoid(params.head.apply(x));
    const MatrixX<Scalar> dlogit =
        (bce_grad(p, y, scale).array() * p.array() * (Scalar(1) - p.array())).matrix();
    grad.head.w.noalias() += dlogit * x.transpose();
    grad.head.b += dlogit.rowwise().sum();
    return bce_sum(p, y);
  }
};

// ---- GRU encoder followed by one fully connected layer ----

template <typename ScalarT>
struct GruFcParams {
  using Scalar = ScalarT;
  GruParams<Scalar> encoder;  // x = 1
  DenseLayer<Scalar> head;    // o x d

  template <typename F>
  void visit_blocks(F&& f) {
    encoder.visit_blocks(f, "encoder/");
    head.visit_blocks(f, "fc/");
  }
};

template <typename ScalarT>
struct GruFcModel {
  using Scalar = ScalarT;
  using Params = GruFcParams<Scalar>;
  using Config = SequenceConfig;
  static constexpr std::string_view kName = "gru_fc";

  SequenceConfig config;
  Params params;

  static Params zeros(const SequenceConfig& cfg) {
    cfg.validate();
    return {GruParams<Scalar>::zeros(cfg.hidden, 1),
            DenseLayer<Scalar>::zeros(cfg.output_len, cfg.hidden)};
  }
  static GruFcModel initialized(const SequenceConfig& cfg, Rng& rng) {
    GruFcModel m{cfg, zeros(cfg)};
    detail::glorot_weights(m.params, rng);
    return m;
  }
  Params zero_like() const { return zeros(config); }

  MatrixX<Scalar> predict(std::span<const Window* const> windows, const ProfileSet&) const {
    MatrixX<Scalar> x, y;
    detail::occupancy_matrices<Scalar>(config, windows, kName, x, y);
    const MatrixX<Scalar> h = gru_sequence_forward(detail::occupancy_steps(x), params.encoder);
    return sigmoid(params.head.apply(h));
  }

  Scalar loss(std::span<const Window* const> windows, const ProfileSet&) const {
    MatrixX<Scalar> x, y;
    detail::occupancy_matrices<Scalar>(config, windows, kName, x, y);
    const MatrixX<Scalar> h = gru_sequence_forward(detail::occupancy_steps(x), params.encoder);
    return bce_sum(MatrixX<Scalar>(sigmoid(params.head.apply(h))), y);
  }

  Scalar loss_and_gradient(std::span<const Window* const> windows, const ProfileSet&,
                           Params& grad, Scalar scale) const {
    MatrixX<Scalar> x, y;
    detail::occupancy_matrices<Scalar>(config, windows, kName, x, y);
    GruSequenceCache<Scalar> cache;
    const MatrixX<Scalar> h =
        gru_sequence_forward(detail::occupancy_steps(x), params.encoder, &cache);
    const MatrixX<Scalar> p = sigmoid(params.head.apply(h));
    const MatrixX<Scalar> dlogit =
        (bce_grad(p, y, scale).array() * p.array() * (Scalar(1) - p.array())).matrix();
    grad.head.w.noalias() += dlogit * h.transpose();
    grad.head.b += dlogit.rowwise().sum();
    const MatrixX<Scalar> dh = params.head.w.transpose() * dlogit;
    gru_sequence_backward(dh, cache, params.encoder, grad.encoder);
    return bce_sum(p, y);
  }
};

// ---- sequence to sequence: GRU encoder, DFDS decoder ----

template <typename ScalarT>
struct Seq2SeqParams {
  using Scalar = ScalarT;
  GruParams<Scalar> encoder;  // x = 1
  GruParams<Scalar> decoder;  // x = 1
  DenseLayer<Scalar> head;    // 1 x d

  template <typename F>
  void visit_blocks(F&& f) {
    encoder.visit_blocks(f, "encoder/");
    decoder.visit_blocks(f, "decoder/");
    head.visit_blocks(f, "head/");
  }
};

template <typename ScalarT>
struct Seq2SeqModel {
  using Scalar = ScalarT;
  using Params = Seq2SeqParams<Scalar>;
  using Config = SequenceConfig;
  static constexpr std::string_view kName = "seq2seq";

  SequenceConfig config;
  Params params;

  static Params zeros(const SequenceConfig& cfg) {
    cfg.validate();
    return {GruParams<Scalar>::zeros(cfg.hidden, 1), GruParams<Scalar>::zeros(cfg.hidden, 1),
            DenseLayer<Scalar>::zeros(1, cfg.hidden)};
  }
  static Seq2SeqModel initialized(const SequenceConfig& cfg, Rng& rng) {
    Seq2SeqModel m{cfg, zeros(cfg)};
    detail::glorot_weights(m.params, rng);
    return m;
  }
  Params zero_like() const { return zeros(config); }

  MatrixX<Scalar> predict(std::span<const Window* const> windows, const ProfileSet&) const {
    MatrixX<Scalar> x, y;
    detail::occupancy_matrices<Scalar>(config, windows, kName, x, y);
    const MatrixX<Scalar> h = gru_sequence_forward(detail::occupancy_steps(x), params.encoder);
    return decode<Scalar>(h, x.bottomRows(1), config.output_len, params.decoder, params.head);
  }

  Scalar loss(std::span<const Window* const> windows, const ProfileSet& profiles) const {
    MatrixX<Scalar> x, y;
    detail::occupancy_matrices<Scalar>(config, windows, kName, x, y);
    return bce_sum(predict(windows, profiles), y);
  }

  Scalar loss_and_gradient(std::span<const Window* const> windows, const ProfileSet&,
                           Params& grad, Scalar scale) const {
    MatrixX<Scalar> x, y;
    detail::occupancy_matrices<Scalar>(config, windows, kName, x, y);
    GruSequenceCache<Scalar> enc_cache;
    const MatrixX<Scalar> h =
        gru_sequence_forward(detail::occupancy_steps(x), params.encoder, &enc_cache);
    DecoderCache<Scalar> dec_cache;
    const MatrixX<Scalar> p = decode<Scalar>(h, x.bottomRows(1), config.output_len,
                                             params.decoder, params.head, &dec_cache);
    const MatrixX<Scalar> dh = decode_backward(bce_grad(p, y, scale), dec_cache, params.decoder,
                                               params.head, grad.decoder, grad.head);
    gru_sequence_backward(dh, enc_cache, params.encoder, grad.encoder);
    return bce_sum(p, y);
  }
};

}  // namespace dfds::model
