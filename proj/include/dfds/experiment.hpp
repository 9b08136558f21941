#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dfds/baselines.hpp"
#include "dfds/checkpoint.hpp"
#include "dfds/data.hpp"
#include "dfds/features.hpp"
#include "dfds/metrics.hpp"
#include "dfds/training.hpp"

namespace dfds::experiment {

/// Settings shared by every subcommand. Keys of the flat config file match
/// the names returned by to_kv().
struct RunConfig {
  std::string data_path;
  std::string out_path;
  std::string model = "dfds";
  std::uint64_t seed = 1;
  double input_hours = 16.0;
  double output_hours = 8.0;
  int hidden = 100;
  int epochs = 20;
  double lr = 1e-3;
  int batch_size = 64;
  int threads = 1;
  std::optional<double> grad_clip_norm;
  int test_weeks = 5;
  /// Offset between consecutive training / evaluation windows, in slots.
  int train_stride = 1;
  int eval_stride = 1;
  /// Unix seconds; defaults to the last slot minus test_weeks weeks.
  std::optional<std::int64_t> train_end;
  bool weekday_profiles = false;
  std::string ablation = "full";
  std::vector<double> sweep_hours{8.0, 12.0, 16.0, 24.0};

  /// hours * 4, rejecting horizons that are not whole slots.
  int input_len() const;
  int output_len() const;
  static int hours_to_slots(double hours, const std::string& what);

  /// Throws UsageError on invalid settings.
  void validate() const;

  /// Throws UsageError for unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_kv() const;

  training::TrainConfig train_config() const;
  baselines::ModelOptions model_options(model::Ablation ablation) const;
};

/// `key = value` lines; blank lines and '#' comments are ignored.
std::map<std::string, std::string> parse_kv(std::istream& in);
std::map<std::string, std::string> read_kv_file(const std::string& path);
void write_kv(std::ostream& out, const std::map<std::string, std::string>& kv);
void apply_kv(RunConfig& cfg, const std::map<std::string, std::string>& kv);

struct PreparedData {
  std::vector<data::StationSeries> series;
  data::DatasetSplit split;
  features::ProfileSet profiles;
  std::vector<data::Window> train_windows;
  std::vector<std::vector<data::Window>> test_windows;  // one list per test week

  baselines::TrainingSet training_set() const {
    return {split.train, train_windows, &profiles};
  }
};

/// Split, training-only profiles and windows for the given horizons.
PreparedData prepare(std::span<const data::ChargingRecord> records, const RunConfig& cfg,
                     int input_len, int output_len);
PreparedData prepare(std::span<const data::ChargingRecord> records, const RunConfig& cfg);

/// Scores each test week separately ("week1", ...) and macro-averages.
metrics::MetricsReport evaluate(const baselines::Forecaster& f,
                                const std::vector<std::vector<data::Window>>& test_windows,
                                const features::ProfileSet& profiles, int chunk = 512);

using Progress = std::function<void(const std::string& message)>;

/// Builds and fits the configured model (optionally ablated DFDS).
std::unique_ptr<baselines::Forecaster> fit_model(const RunConfig& cfg, const PreparedData& data,
                                                 const std::string& model_name,
                                                 model::Ablation ablation = model::Ablation::none,
                                                 const training::EpochCallback& on_epoch = {});

/// Model state plus profiles and the run settings needed to rebuild the split.
checkpoint::Checkpoint make_checkpoint(const baselines::Forecaster& f, const PreparedData& data,
                                       const RunConfig& cfg);

struct LoadedRun {
  std::unique_ptr<baselines::Forecaster> forecaster;
  features::ProfileSet profiles;
  RunConfig config;
  int input_len = 0;
  int output_len = 0;
};

/// Restores a checkpoint; refits models that keep no state on disk using the
/// training part of `records`.
LoadedRun load_run(const checkpoint::Checkpoint& ck,
                   std::span<const data::ChargingRecord> records);
/// Test windows for a loaded run, built from `records` with the stored split.
std::vector<std::vector<data::Window>> test_windows_for(const LoadedRun& run,
                                                        std::span<const data::ChargingRecord> records);

struct AblationRow {
  std::string name;
  metrics::Prf macro;
  double delta_precision_pp = 0.0;  // ablated minus full, in percent points
  double delta_recall_pp = 0.0;
  double delta_f1_pp = 0.0;
};

/// Full DFDS plus one retrained run per ablation, all with the master seed.
std::vector<AblationRow> run_ablation(const RunConfig& cfg, const PreparedData& data,
                                      const Progress& progress = {});
void write_ablation(std::ostream& out, const std::vector<AblationRow>& rows);

struct SweepRow {
  double input_hours = 0.0;
  int input_len = 0;
  metrics::Prf macro;
};

/// Retrains the configured model per input horizon in cfg.sweep_hours.
std::vector<SweepRow> run_sweep(const RunConfig& cfg,
                                std::span<const data::ChargingRecord> records,
                                const Progress& progress = {});
void write_sweep(std::ostream& out, const std::vector<SweepRow>& rows);

struct GradcheckRow {
  std::string model;
  std::uint64_t seed = 0;
  training::GradCheckReport report;
};

/// Gradient checks of dfds, seq2seq, gru_fc and logreg at d=4, i=3, o=3 on
/// random windows. `fault_model` doubles that model's largest analytic
/// gradient coordinate.
std::vector<GradcheckRow> run_gradchecks(std::uint64_t seed, double tolerance,
                                         const std::optional<std::string>& fault_model = {});
void write_gradchecks(std::ostream& out, const std::vector<GradcheckRow>& rows);

void write_loss_log(std::ostream& out, const std::vector<double>& loss_history);

}  // namespace dfds::experiment
