#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfds/data.hpp"
#include "dfds/features.hpp"
#include "dfds/gru.hpp"
#include "dfds/loss.hpp"
#include "dfds/numerics.hpp"

namespace dfds::model {

using data::Window;
using features::ProfileSet;

/// Fully connected layer y = w x + b, b stored as (out x 1).
template <typename ScalarT>
struct DenseLayer {
  using Scalar = ScalarT;
  MatrixX<Scalar> w, b;

  static DenseLayer zeros(Index out, Index in) {
    return {MatrixX<Scalar>::Zero(out, in), MatrixX<Scalar>::Zero(out, 1)};
  }
  static DenseLayer glorot(Index out, Index in, Rng& rng) {
    return {glorot_init_as<Scalar>(out, in, rng), MatrixX<Scalar>::Zero(out, 1)};
  }

  MatrixX<Scalar> apply(const MatrixX<Scalar>& x) const {
    if (x.rows() != w.cols()) {
      throw ShapeError("dense layer: weight " + shape_string(w) + " cannot take input " +
                       shape_string(x));
    }
    return (w * x).colwise() + b.col(0);
  }

  template <typename F>
  void visit_blocks(F&& f, std::string_view prefix = "") {
    const std::string p(prefix);
    f(p + "w", w);
    f(p + "b", b);
  }
};

/// Structural variants used by the feature-importance experiments. At most one
/// component or feature is removed per run.
enum class Ablation {
  none,
  drop_dynamic_component,
  drop_static_component,
  drop_occupation,
  drop_day_of_week,
  drop_time_of_day,
  drop_mean,
  drop_q25,
  drop_q75,
};

inline constexpr std::array<Ablation, 8> kAllAblations{
    Ablation::drop_dynamic_component, Ablation::drop_static_component,
    Ablation::drop_occupation,        Ablation::drop_day_of_week,
    Ablation::drop_time_of_day,       Ablation::drop_mean,
    Ablation::drop_q25,               Ablation::drop_q75};

std::string to_string(Ablation a);
/// Throws UsageError for unknown names.
Ablation parse_ablation(std::string_view name);

struct DfdsConfig {
  int input_len = 64;
  int output_len = 32;
  int d_encoder = 100;
  int d_static = 100;
  /// The fused vector initialises the decoder state, so d_fusion == d_decoder.
  int d_fusion = 100;
  int d_decoder = 100;

  bool use_encoder = true;
  bool use_occupation = true;
  bool use_weekday = true;
  bool use_time_of_day = true;
  std::array<bool, features::kStaticFeatureCount> use_static{true, true, true};

  static DfdsConfig with_ablation(DfdsConfig base, Ablation a);

  int dynamic_dim() const;
  int static_count() const;
  int fusion_width() const;
  /// Throws ShapeError for inconsistent sizes.
  void validate() const;
};

template <typename ScalarT>
struct DfdsParams {
  using Scalar = ScalarT;

  std::optional<GruParams<Scalar>> encoder;
  std::array<std::optional<DenseLayer<Scalar>>, features::kStaticFeatureCount> static_enc;
  DenseLayer<Scalar> fusion;
  GruParams<Scalar> decoder;
  DenseLayer<Scalar> head;  // 1 x d_decoder

  static DfdsParams zeros(const DfdsConfig& cfg) {
    cfg.validate();
    DfdsParams p;
    if (cfg.use_encoder) p.encoder = GruParams<Scalar>::zeros(cfg.d_encoder, cfg.dynamic_dim());
    for (int f = 0; f < features::kStaticFeatureCount; ++f) {
      if (cfg.use_static[f]) p.static_enc[f] = DenseLayer<Scalar>::zeros(cfg.d_static, cfg.output_len);
    }
    p.fusion = DenseLayer<Scalar>::zeros(cfg.d_fusion, cfg.fusion_width());
    p.decoder = GruParams<Scalar>::zeros(cfg.d_decoder, 1);
    p.head = DenseLayer<Scalar>::zeros(1, cfg.d_decoder);
    return p;
  }

  /// Glorot weights, zero biases. Blocks draw from the generator in visiting order.
  static DfdsParams glorot(const DfdsConfig& cfg, Rng& rng) {
    DfdsParams p = zeros(cfg);
    p.visit_blocks([&](std::string_view name, MatrixX<Scalar>& m) {
      if (name.back() != 'b' && name.find("/b_") == std::string_view::npos) {
        m = glorot_init_as<Scalar>(m.rows(), m.cols(), rng);
      }
    });
    return p;
  }

  template <typename F>
  void visit_blocks(F&& f) {
    static constexpr std::array<const char*, 3> kStaticNames{"static_mean/", "static_q25/",
                                                             "static_q75/"};
    if (encoder) encoder->visit_blocks(f, "encoder/");
    for (int k = 0; k < features::kStaticFeatureCount; ++k) {
      if (static_enc[k]) static_enc[k]->visit_blocks(f, kStaticNames[k]);
    }
    fusion.visit_blocks(f, "fusion/");
    decoder.visit_blocks(f, "decoder/");
    head.visit_blocks(f, "head/");
  }
};

/// Batched model inputs; column b belongs to window b.
template <typename Scalar>
struct DfdsBatch {
  std::vector<MatrixX<Scalar>> inputs;                                   // i x (dyn_dim x B)
  std::array<MatrixX<Scalar>, features::kStaticFeatureCount> static_rows;  // o x B each
  MatrixX<Scalar> last_obs;                                              // 1 x B
  MatrixX<Scalar> targets;                                               // o x B

  Index batch_size() const { return targets.cols(); }
};

/// Builds encoder inputs (enabled dynamic feature blocks only), static rows,
/// decoder seeds and targets. The decoder seed is the last observed occupancy,
/// or 0 when the occupation feature is ablated.
template <typename Scalar>
DfdsBatch<Scalar> make_dfds_batch(const DfdsConfig& cfg, std::span<const Window* const> windows,
                                  const ProfileSet& profiles) {
  const Index B = static_cast<Index>(windows.size());
  const int i = cfg.input_len;
  const int o = cfg.output_len;
  DfdsBatch<Scalar> batch;
  batch.last_obs = MatrixX<Scalar>::Zero(1, B);
  batch.targets.resize(o, B);
  for (auto& r : batch.static_rows) r.resize(o, B);
  if (cfg.use_encoder) batch.inputs.assign(i, MatrixX<Scalar>::Zero(cfg.dynamic_dim(), B));

  for (Index b = 0; b < B; ++b) {
    const Window& w = *windows[b];
    if (w.input_len() != i || w.output_len() != o) {
      throw ShapeError("DFDS batch: window horizons (" + std::to_string(w.input_len()) + ", " +
                       std::to_string(w.output_len()) + ") do not match model (" +
                       std::to_string(i) + ", " + std::to_string(o) + ")");
    }
    for (int t = 0; t < o; ++t) batch.targets(t, b) = Scalar(w.target_occ[t]);
    if (cfg.use_occupation) batch.last_obs(0, b) = Scalar(w.input_occ[i - 1]);

    if (cfg.static_count() > 0) {
      const features::StaticProfile& prof = profiles.lookup(w.station_id);
      for (int t = 0; t < o; ++t) {
        const int bucket = prof.bucket(w.target_slot(t));
        batch.static_rows[0](t, b) = Scalar(prof.mean_occ[bucket]);
        batch.static_rows[1](t, b) = Scalar(prof.q25_occ[bucket]);
        batch.static_rows[2](t, b) = Scalar(prof.q75_occ[bucket]);
      }
    }

    if (!cfg.use_encoder) continue;
    for (int t = 0; t < i; ++t) {
      const features::DynamicFeatures full = features::encode_dynamic(w.input_occ[t], w.input_slot(t));
      auto& x = batch.inputs[t];
      Index row = 0;
      if (cfg.use_occupation) x(row++, b) = Scalar(full[features::kOccupancyOffset]);
      if (cfg.use_weekday) {
        for (int k = 0; k < 7; ++k) x(row++, b) = Scalar(full[features::kWeekdayOffset + k]);
      }
      if (cfg.use_time_of_day) {
        for (int k = 0; k < 28; ++k) x(row++, b) = Scalar(full[features::kHourOffset + k]);
      }
    }
  }
  return batch;
}

// ---- static information component ----

template <typename Scalar>
struct StaticCache {
  std::array<MatrixX<Scalar>, features::kStaticFeatureCount> input, pre;
};

/// s_f = relu(A_f row_f + c_f) for every enabled static feature; disabled
/// features yield empty matrices.
template <typename Scalar>
std::array<MatrixX<Scalar>, features::kStaticFeatureCount> encode_static(
    const std::array<MatrixX<Scalar>, features::kStaticFeatureCount>& rows,
    const std::array<std::optional<DenseLayer<Scalar>>, features::kStaticFeatureCount>& layers,
    StaticCache<Scalar>* cache = nullptr) {
  std::array<MatrixX<Scalar>, features::kStaticFeatureCount> out;
  for (int f = 0; f < features::kStaticFeatureCount; ++f) {
    if (!layers[f]) continue;
    MatrixX<Scalar> pre = layers[f]->apply(rows[f]);
    out[f] = relu(pre);
    if (cache != nullptr) {
      cache->input[f] = rows[f];
      cache->pre[f] = std::move(pre);
    }
  }
  return out;
}

// ---- fusion component ----

template <typename Scalar>
struct FusionCache {
  MatrixX<Scalar> input, pre;
};

/// u = relu(W [h; s_mean; s_q25; s_q75] + b); empty parts are skipped.
template <typename Scalar>
MatrixX<Scalar> fuse(const MatrixX<Scalar>& h_final,
                     const std::array<MatrixX<Scalar>, features::kStaticFeatureCount>& statics,
                     const DenseLayer<Scalar>& layer, FusionCache<Scalar>* cache = nullptr) {
  Index rows = h_final.rows();
  Index cols = h_final.cols();
  for (const auto& s : statics) {
    rows += s.rows();
    if (s.size() > 0) cols = s.cols();
  }
  MatrixX<Scalar> concat(rows, cols);
  Index r = 0;
  if (h_final.size() > 0) {
    concat.topRows(h_final.rows()) = h_final;
    r = h_final.rows();
  }
  for (const auto& s : statics) {
    if (s.size() == 0) continue;
    concat.middleRows(r, s.rows()) = s;
    r += s.rows();
  }
  MatrixX<Scalar> pre = layer.apply(concat);
  MatrixX<Scalar> u = relu(pre);
  if (cache != nullptr) {
    cache->input = std::move(concat);
    cache->pre = std::move(pre);
  }
  return u;
}

// ---- autoregressive decoder ----

template <typename Scalar>
struct DecoderCache {
  std::vector<GruCellCache<Scalar>> cells;
  std::vector<MatrixX<Scalar>> hidden;  // g_1 .. g_o
  MatrixX<Scalar> preds;                // o x B
};

/// g_0 = init; a_1 = seed; g_t = GRU(a_t, g_{t-1}); y_t = sigmoid(w g_t + b);
/// a_{t+1} = y_t. Returns predictions (o x B).
template <typename Scalar>
MatrixX<Scalar> decode(const MatrixX<Scalar>& init, const MatrixX<Scalar>& seed, int output_len,
                       const GruParams<Scalar>& cell, const DenseLayer<Scalar>& head,
                       DecoderCache<Scalar>* cache = nullptr) {
  if (output_len < 1) throw ShapeError("decode: output length must be >= 1");
  const Index B = init.cols();
  MatrixX<Scalar> preds(output_len, B);
  MatrixX<Scalar> g = init;
  MatrixX<Scalar> a = seed;
  if (cache != nullptr) {
    cache->cells.resize(output_len);
    cache->hidden.resize(output_len);
  }
  for (int t = 0; t < output_len; ++t) {
    g = gru_cell_forward(a, g, cell, cache != nullptr ? &cache->cells[t] : nullptr);
    a = sigmoid(head.apply(g));
    preds.row(t) = a.row(0);
    if (cache != nullptr) cache->hidden[t] = g;
  }
  if (cache != nullptr) cache->preds = preds;
  return preds;
}

/// Full backpropagation through the autoregressive feed. `dpreds` is the loss
/// gradient with respect to each prediction; returns d(loss)/d(init).
template <typename Scalar>
MatrixX<Scalar> decode_backward(const MatrixX<Scalar>& dpreds, const DecoderCache<Scalar>& cache,
                                const GruParams<Scalar>& cell, const DenseLayer<Scalar>& head,
                                GruParams<Scalar>& cell_grad, DenseLayer<Scalar>& head_grad) {
  const auto o = static_cast<int>(cache.cells.size());
  const Index B = dpreds.cols();
  MatrixX<Scalar> dg = MatrixX<Scalar>::Zero(cell.hidden_size(), B);
  MatrixX<Scalar> da_next = MatrixX<Scalar>::Zero(1, B);
  MatrixX<Scalar> dx;
  for (int t = o - 1; t >= 0; --t) {
    const auto y = cache.preds.row(t).array();
    const MatrixX<Scalar> dlogit =
        ((dpreds.row(t) + da_next).array() * y * (Scalar(1) - y)).matrix();
    head_grad.w.noalias() += dlogit * cache.hidden[t].transpose();
    head_grad.b(0, 0) += dlogit.sum();
    dg.noalias() += head.w.transpose() * dlogit;
    dg = gru_cell_backward(dg, cache.cells[t], cell, cell_grad, &dx);
    da_next = dx;  // a_t = y_{t-1}; at t = 0 the seed is data
  }
  return dg;
}

// ---- full model ----

template <typename Scalar>
struct DfdsCache {
  GruSequenceCache<Scalar> encoder;
  MatrixX<Scalar> h_final;
  StaticCache<Scalar> statics;
  FusionCache<Scalar> fusion;
  DecoderCache<Scalar> decoder;
};

template <typename Scalar>
MatrixX<Scalar> dfds_forward(const DfdsConfig& cfg, const DfdsBatch<Scalar>& batch,
                             const DfdsParams<Scalar>& p, DfdsCache<Scalar>* cache = nullptr) {
  MatrixX<Scalar> h_final;
  if (cfg.use_encoder) {
    h_final = gru_sequence_forward(batch.inputs, *p.encoder,
                                   cache != nullptr ? &cache->encoder : nullptr);
  }
  const auto statics =
      encode_static(batch.static_rows, p.static_enc, cache != nullptr ? &cache->statics : nullptr);
  const MatrixX<Scalar> u = fuse(h_final, statics, p.fusion, cache != nullptr ? &cache->fusion : nullptr);
  if (cache != nullptr) cache->h_final = h_final;
  return decode(u, batch.last_obs, cfg.output_len, p.decoder, p.head,
                cache != nullptr ? &cache->decoder : nullptr);
}

/// Accumulates scale * d(bce_sum)/d(params) into `grad`.
template <typename Scalar>
void dfds_backward(const DfdsConfig& cfg, const DfdsBatch<Scalar>& batch,
                   const DfdsCache<Scalar>& cache, const DfdsParams<Scalar>& p,
                   DfdsParams<Scalar>& grad, Scalar scale) {
  const MatrixX<Scalar> dpreds = bce_grad(cache.decoder.preds, batch.targets, scale);
  const MatrixX<Scalar> du =
      decode_backward(dpreds, cache.decoder, p.decoder, p.head, grad.decoder, grad.head);

  const MatrixX<Scalar> dpre =
      du.cwiseProduct((cache.fusion.pre.array() > Scalar(0)).template cast<Scalar>().matrix());
  grad.fusion.w.noalias() += dpre * cache.fusion.input.transpose();
  grad.fusion.b += dpre.rowwise().sum();
  const MatrixX<Scalar> dconcat = p.fusion.w.transpose() * dpre;

  Index r = 0;
  if (cfg.use_encoder) {
    const Index d = cfg.d_encoder;
    gru_sequence_backward<Scalar>(dconcat.topRows(d), cache.encoder, *p.encoder, *grad.encoder);
    r = d;
  }
  for (int f = 0; f < features::kStaticFeatureCount; ++f) {
    if (!p.static_enc[f]) continue;
    const Index d = cfg.d_static;
    const MatrixX<Scalar> ds = dconcat.middleRows(r, d).cwiseProduct(
        (cache.statics.pre[f].array() > Scalar(0)).template cast<Scalar>().matrix());
    grad.static_enc[f]->w.noalias() += ds * cache.statics.input[f].transpose();
    grad.static_enc[f]->b += ds.rowwise().sum();
    r += d;
  }
}

/// DFDS bundled with its configuration, exposing the training interface
/// shared by all gradient-trained forecasters.
template <typename ScalarT>
struct DfdsModel {
  using Scalar = ScalarT;
  using Params = DfdsParams<Scalar>;
  using Config = DfdsConfig;
  static constexpr std::string_view kName = "dfds";

  DfdsConfig config;
  Params params;

  static DfdsModel initialized(const DfdsConfig& cfg, Rng& rng) {
    return {cfg, Params::glorot(cfg, rng)};
  }

  Params zero_like() const { return Params::zeros(config); }

  /// Returns bce_sum over the batch; accumulates scale * gradient into `grad`.
  Scalar loss_and_gradient(std::span<const Window* const> windows, const ProfileSet& profiles,
                           Params& grad, Scalar scale) const {
    const auto batch = make_dfds_batch<Scalar>(config, windows, profiles);
    DfdsCache<Scalar> cache;
    dfds_forward(config, batch, params, &cache);
    dfds_backward(config, batch, cache, params, grad, scale);
    return bce_sum(cache.decoder.preds, batch.targets);
  }

  Scalar loss(std::span<const Window* const> windows, const ProfileSet& profiles) const {
    const auto batch = make_dfds_batch<Scalar>(config, windows, profiles);
    return bce_sum(dfds_forward(config, batch, params), batch.targets);
  }

  /// Probabilities (o x B).
  MatrixX<Scalar> predict(std::span<const Window* const> windows, const ProfileSet& profiles) const {
    return dfds_forward(config, make_dfds_batch<Scalar>(config, windows, profiles), params);
  }
};

}  // namespace dfds::model
