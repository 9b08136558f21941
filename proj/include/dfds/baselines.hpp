#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfds/checkpoint.hpp"
#include "dfds/data.hpp"
#include "dfds/dfds.hpp"
#include "dfds/features.hpp"
#include "dfds/numerics.hpp"
#include "dfds/sequence_models.hpp"
#include "dfds/training.hpp"

namespace dfds::baselines {

using data::StationSeries;
using data::Window;
using features::ProfileSet;

/// Everything a forecaster may learn from. Only training data goes in here.
struct TrainingSet {
  std::span<const StationSeries> series;
  std::span<const Window> windows;
  const ProfileSet* profiles = nullptr;
};

/// Uniform contract over DFDS and the comparator models.
class Forecaster {
 public:
  virtual ~Forecaster() = default;

  virtual std::string name() const = 0;
  virtual void fit(const TrainingSet& data) = 0;
  virtual bool fitted() const = 0;

  /// Occupancy probabilities in [0, 1], one column per window (o x B).
  /// Throws UsageError before fit.
  virtual Matrix predict(std::span<const Window* const> windows,
                         const ProfileSet& profiles) const = 0;
  std::vector<double> predict_one(const Window& window, const ProfileSet& profiles) const;

  /// Mean training loss per epoch; empty for closed-form models.
  virtual std::vector<double> loss_history() const { return {}; }

  /// Writes model name, configuration and fitted state.
  virtual void save(checkpoint::Checkpoint& ck) const = 0;
  virtual void load(const checkpoint::Checkpoint& ck) = 0;

  /// True when `load` restores configuration only and fit must run again on
  /// the same training data before predicting.
  virtual bool refit_after_load() const { return false; }

 protected:
  void require_fitted() const;
};

/// Mean occupancy per (station, weekday, slot of day) over the training series.
/// Empty buckets fall back to the station mean, unknown stations to the
/// global mean.
class HistoricalAverage final : public Forecaster {
 public:
  static constexpr int kBuckets = 7 * 96;

  std::string name() const override { return "havg"; }
  /// Throws DataError when the series hold no samples.
  void fit(const TrainingSet& data) override;
  bool fitted() const override { return fitted_; }
  Matrix predict(std::span<const Window* const> windows, const ProfileSet& profiles) const override;
  void save(checkpoint::Checkpoint& ck) const override;
  void load(const checkpoint::Checkpoint& ck) override;

  /// Bucket index weekday * 96 + slot_of_day.
  static int bucket(data::TimeSlot slot) { return slot.weekday() * 96 + slot.slot_of_day(); }
  double bucket_mean(const std::string& station_id, int bucket) const;
  double station_mean(const std::string& station_id) const;
  double global_mean() const;

 private:
  struct Buckets {
    std::vector<double> sum = std::vector<double>(kBuckets, 0.0);
    std::vector<std::int64_t> count = std::vector<std::int64_t>(kBuckets, 0);
    double total_sum = 0.0;
    std::int64_t total_count = 0;
  };
  std::map<std::string, Buckets> stations_;
  double global_sum_ = 0.0;
  std::int64_t global_count_ = 0;
  bool fitted_ = false;
};

/// Nearest neighbour (k = 1) by squared Euclidean distance between input
/// bit vectors; copies the neighbour's targets. The pool is the query
/// station's training windows, or all windows for an unseen station. Ties
/// go to the earliest input_start, then the smallest station_id.
class NearestNeighbor final : public Forecaster {
 public:
  std::string name() const override { return "knn"; }
  /// Throws DataError on an empty pool.
  void fit(const TrainingSet& data) override;
  bool fitted() const override { return fitted_; }
  Matrix predict(std::span<const Window* const> windows, const ProfileSet& profiles) const override;
  void save(checkpoint::Checkpoint& ck) const override;
  void load(const checkpoint::Checkpoint& ck) override;
  bool refit_after_load() const override { return true; }

  /// Pool index of the neighbour chosen for `query`, into the pool order
  /// (input_start, station_id).
  std::size_t neighbor_index(const Window& query) const;
  const Window& pool_window(std::size_t index) const { return pool_[index]; }

 private:
  struct Pool {
    std::vector<std::size_t> members;  // indices into pool_, in tie-break order
    Matrix inputs;                     // members x i
    Eigen::VectorXd sq_norms;
  };
  const Pool& pool_for(const std::string& station_id) const;
  Pool make_pool(std::vector<std::size_t> members) const;

  int input_len_ = 0;
  int output_len_ = 0;
  std::vector<Window> pool_;
  std::map<std::string, Pool> by_station_;
  Pool all_;
  bool fitted_ = false;
};

// Configuration (de)serialisation for the gradient-trained models.
void store_config(checkpoint::Checkpoint& ck, const model::DfdsConfig& cfg);
void load_config(const checkpoint::Checkpoint& ck, model::DfdsConfig& cfg);
void store_config(checkpoint::Checkpoint& ck, const model::SequenceConfig& cfg);
void load_config(const checkpoint::Checkpoint& ck, model::SequenceConfig& cfg);

/// Adapts any gradient-trained model to the Forecaster contract. Parameters
/// are drawn from Rng(init_seed); the training loop shuffles with its own seed.
template <typename Model>
class NeuralForecaster final : public Forecaster {
 public:
  using Config = typename Model::Config;

  NeuralForecaster(Config config, training::TrainConfig train, std::uint64_t init_seed)
      : config_(config), train_(train), init_seed_(init_seed) {}

  std::string name() const override { return std::string(Model::kName); }

  void fit(const TrainingSet& data) override {
    if (data.profiles == nullptr) throw UsageError(name() + ": fit needs static profiles");
    Rng rng(init_seed_);
    model_ = Model::initialized(config_, rng);
    history_ = training::train(*model_, data.windows, *data.profiles, train_, on_epoch_).loss_history;
  }

  bool fitted() const override { return model_.has_value(); }

  Matrix predict(std::span<const Window* const> windows, const ProfileSet& profiles) const override {
    require_fitted();
    return model_->predict(windows, profiles);
  }

  std::vector<double> loss_history() const override { return history_; }

  void save(checkpoint::Checkpoint& ck) const override {
    require_fitted();
    ck.model = name();
    store_config(ck, config_);
    auto params = model_->params;
    checkpoint::store_params(ck, params, "param/");
  }

  void load(const checkpoint::Checkpoint& ck) override {
    if (ck.model != name()) {
      throw DataError("checkpoint holds model '" + ck.model + "', expected '" + name() + "'");
    }
    load_config(ck, config_);
    Model m{config_, {}};
    m.params = m.zero_like();
    checkpoint::load_params(ck, m.params, "param/");
    model_ = std::move(m);
    history_.clear();
  }

  void set_epoch_callback(training::EpochCallback cb) { on_epoch_ = std::move(cb); }
  const Model& model() const {
    require_fitted();
    return *model_;
  }
  const Config& config() const { return config_; }

 private:
  Config config_;
  training::TrainConfig train_;
  std::uint64_t init_seed_;
  std::optional<Model> model_;
  std::vector<double> history_;
  training::EpochCallback on_epoch_;
};

using DfdsForecaster = NeuralForecaster<model::DfdsModel<double>>;
using LogRegForecaster = NeuralForecaster<model::LogRegModel<double>>;
using GruFcForecaster = NeuralForecaster<model::GruFcModel<double>>;
using Seq2SeqForecaster = NeuralForecaster<model::Seq2SeqModel<double>>;

inline constexpr std::array<std::string_view, 6> kModelNames{"dfds",   "havg",    "knn",
                                                             "logreg", "gru_fc", "seq2seq"};

struct ModelOptions {
  int input_len = 64;
  int output_len = 32;
  int hidden = 100;
  model::Ablation ablation = model::Ablation::none;
  training::TrainConfig train;
  std::uint64_t seed = 1;
};

/// Throws UsageError for names outside kModelNames.
std::unique_ptr<Forecaster> make_forecaster(std::string_view name, const ModelOptions& options);
/// Rebuilds the forecaster named in the checkpoint and restores its state.
std::unique_ptr<Forecaster> load_forecaster(const checkpoint::Checkpoint& ck);

}  // namespace dfds::baselines
