// dfds: generate data, train and evaluate occupancy forecasters, and run the
// ablation, horizon-sweep and gradient-check harnesses.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dfds/error.hpp"
#include "dfds/experiment.hpp"
#include "dfds/synthetic.hpp"

namespace {

using namespace dfds;
using experiment::RunConfig;

// Flag values are collected as strings and applied on top of the config file.
struct Overrides {
  std::map<std::string, std::string> values;

  void add(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { values[key] = v; }, help);
  }
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
  o.add(cmd, "--data", "data", "Input CSV (station_id,timestamp,occupied)");
  o.add(cmd, "--out", "out", "Output path");
  o.add(cmd, "--model", "model", "dfds|havg|knn|logreg|gru_fc|seq2seq");
  o.add(cmd, "--seed", "seed", "Master seed");
  o.add(cmd, "--input-hours", "input_hours", "Input horizon in hours (default 16)");
  o.add(cmd, "--output-hours", "output_hours", "Output horizon in hours (default 8)");
  o.add(cmd, "--epochs", "epochs", "Training epochs (default 20)");
  o.add(cmd, "--lr", "lr", "Adam learning rate (default 0.001)");
  o.add(cmd, "--batch-size", "batch_size", "Mini-batch size (default 64)");
  o.add(cmd, "--threads", "threads", "Gradient worker count (default 1)");
  o.add(cmd, "--hidden", "hidden", "Hidden size of every layer (default 100)");
  o.add(cmd, "--grad-clip", "grad_clip", "Global gradient norm limit, or 'none'");
  o.add(cmd, "--test-weeks", "test_weeks", "Number of weekly test sets (default 5)");
  o.add(cmd, "--train-stride", "train_stride", "Slots between training windows (default 1)");
  o.add(cmd, "--eval-stride", "eval_stride", "Slots between test windows (default 1)");
  o.add(cmd, "--train-end", "train_end", "Train/test boundary as Unix seconds, or 'auto'");
  o.add(cmd, "--weekday-profiles", "weekday_profiles", "Condition static profiles on weekday");
  o.add(cmd, "--ablation", "ablation", "DFDS variant, e.g. drop_occupation (default full)");
}

RunConfig resolve(const std::string& config_path, const Overrides& o) {
  RunConfig cfg;
  if (!config_path.empty()) experiment::apply_kv(cfg, experiment::read_kv_file(config_path));
  experiment::apply_kv(cfg, o.values);
  cfg.validate();
  return cfg;
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError(flag + " is required");
}

std::vector<data::ChargingRecord> load_records(const std::string& path) {
  auto parsed = data::read_records_file(path);
  if (parsed.duplicate_count > 0) {
    std::cerr << "note: " << parsed.duplicate_count
              << " duplicate (station, timestamp) rows; kept the last of each\n";
  }
  return std::move(parsed.records);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path + "'");
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text(path, text);
  }
}

void save_effective_config(const RunConfig& cfg, const std::string& path) {
  std::ostringstream out;
  experiment::write_kv(out, cfg.to_kv());
  write_text(path, out.str());
}

void print_report(const metrics::MetricsReport& r) {
  std::fprintf(stderr, "macro precision %.4f  recall %.4f  f1 %.4f%s\n", r.macro.precision,
               r.macro.recall, r.macro.f1, r.macro.degenerate ? "  (degenerate set present)" : "");
}

// ---- subcommands ----

int cmd_generate(const std::string& config_path, const std::map<std::string, std::string>& flags,
                 const std::string& out_path) {
  require(out_path, "--out");
  data::SyntheticConfig cfg;
  auto kv = config_path.empty() ? std::map<std::string, std::string>{}
                                : experiment::read_kv_file(config_path);
  for (const auto& [k, v] : flags) kv[k] = v;
  for (const auto& [k, v] : kv) {
    try {
      if (k == "n_stations") cfg.n_stations = std::stoi(v);
      else if (k == "n_weeks") cfg.n_weeks = std::stoi(v);
      else if (k == "target_rate") cfg.target_rate = std::stod(v);
      else if (k == "mean_dwell_slots") cfg.mean_dwell_slots = std::stod(v);
      else if (k == "station_scale_sigma") cfg.station_scale_sigma = std::stod(v);
      else if (k == "seed") cfg.seed = std::stoull(v);
      else if (k == "start_timestamp") cfg.start_timestamp = std::stoll(v);
      else if (k == "archetype_mix") {
        std::stringstream in(v);
        std::string item;
        std::size_t n = 0;
        while (std::getline(in, item, ',') && n < cfg.archetype_mix.size()) {
          cfg.archetype_mix[n++] = std::stod(item);
        }
        if (n != cfg.archetype_mix.size()) throw UsageError("archetype_mix needs 4 weights");
      } else {
        throw UsageError("unknown generator key '" + k + "'");
      }
    } catch (const std::logic_error&) {
      throw UsageError("generator key '" + k + "': cannot parse '" + v + "'");
    }
  }
  const auto ds = data::generate_synthetic(cfg);
  data::write_records_file(out_path, ds.records);
  double occupied = 0.0;
  for (const auto& r : ds.records) occupied += r.occupied;
  std::fprintf(stderr, "wrote %zu records for %d stations; occupancy rate %.4f (expected %.4f)\n",
               ds.records.size(), cfg.n_stations, occupied / static_cast<double>(ds.records.size()),
               ds.expected_rate);
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& log_path) {
  require(cfg.data_path, "--data");
  require(cfg.out_path, "--out");
  const auto records = load_records(cfg.data_path);
  const auto data = experiment::prepare(records, cfg);
  std::fprintf(stderr, "%zu training windows, %zu stations with profiles\n",
               data.train_windows.size(), data.profiles.stations.size());
  const auto f = experiment::fit_model(cfg, data, cfg.model, model::parse_ablation(cfg.ablation),
                                       [](int epoch, double loss) {
                                         std::fprintf(stderr, "epoch %d  mean loss %.6f\n", epoch, loss);
                                       });
  experiment::make_checkpoint(*f, data, cfg).save(cfg.out_path);
  save_effective_config(cfg, cfg.out_path + ".config");
  const auto history = f->loss_history();
  if (!history.empty()) {
    std::ostringstream log;
    experiment::write_loss_log(log, history);
    write_text(log_path.empty() ? cfg.out_path + ".log.csv" : log_path, log.str());
  }
  return 0;
}

int cmd_evaluate(const std::string& checkpoint_path, const RunConfig& cfg,
                 const std::map<std::string, std::string>& flags) {
  require(checkpoint_path, "--checkpoint");
  require(cfg.data_path, "--data");
  const auto records = load_records(cfg.data_path);
  const auto run = experiment::load_run(checkpoint::Checkpoint::load(checkpoint_path), records);
  if ((flags.contains("input_hours") && cfg.input_len() != run.input_len) ||
      (flags.contains("output_hours") && cfg.output_len() != run.output_len)) {
    throw DataError("horizon mismatch: checkpoint uses " + std::to_string(run.input_len) + "/" +
                    std::to_string(run.output_len) + " slots, flags ask for " +
                    std::to_string(cfg.input_len()) + "/" + std::to_string(cfg.output_len()));
  }
  const auto report = experiment::evaluate(*run.forecaster, experiment::test_windows_for(run, records),
                                           run.profiles);
  emit(cfg.out_path, metrics::report_csv(report));
  print_report(report);
  return 0;
}

int cmd_ablate(const RunConfig& cfg) {
  require(cfg.data_path, "--data");
  const auto records = load_records(cfg.data_path);
  const auto data = experiment::prepare(records, cfg);
  const auto rows = experiment::run_ablation(
      cfg, data, [](const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); });
  std::ostringstream out;
  experiment::write_ablation(out, rows);
  emit(cfg.out_path, out.str());
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  require(cfg.data_path, "--data");
  const auto records = load_records(cfg.data_path);
  const auto rows = experiment::run_sweep(
      cfg, records, [](const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); });
  std::ostringstream out;
  experiment::write_sweep(out, rows);
  emit(cfg.out_path, out.str());
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg, double tolerance, const std::string& fault) {
  const auto rows = experiment::run_gradchecks(
      cfg.seed, tolerance, fault.empty() ? std::nullopt : std::optional<std::string>(fault));
  std::ostringstream out;
  experiment::write_gradchecks(out, rows);
  emit(cfg.out_path, out.str());
  for (const auto& r : rows) {
    if (!r.report.pass) {
      throw NumericalError("gradient check failed for " + r.model + " at " +
                           r.report.worst_coordinate);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Charging-station occupancy forecasting with dynamic and static features"};
  app.require_subcommand(1);

  std::string config_path;
  std::string log_path;
  std::string checkpoint_path;
  std::string hours_list;
  std::string fault;
  double tolerance = 1e-4;

  Overrides run_flags;
  std::map<std::string, std::string> gen_flags;
  std::string gen_out;

  auto* gen = app.add_subcommand("generate", "Write a synthetic occupancy dataset");
  gen->add_option("--config", config_path, "Generator key = value file");
  gen->add_option("--out", gen_out, "Output CSV")->required();
  const auto gen_flag = [&](const std::string& flag, const std::string& key, const std::string& help) {
    gen->add_option_function<std::string>(flag, [&gen_flags, key](const std::string& v) { gen_flags[key] = v; },
                                          help);
  };
  gen_flag("--seed", "seed", "Generator seed (default 7)");
  gen_flag("--stations", "n_stations", "Number of stations (default 50)");
  gen_flag("--weeks", "n_weeks", "Number of weeks (default 20)");
  gen_flag("--target-rate", "target_rate", "Mean occupancy rate (default 0.088)");
  gen_flag("--dwell", "mean_dwell_slots", "Mean charging duration in slots (default 6)");

  auto* train = app.add_subcommand("train", "Fit a model and write a checkpoint");
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on the weekly test sets");
  auto* ablate = app.add_subcommand("ablate", "Retrain DFDS without each component or feature");
  auto* sweep = app.add_subcommand("sweep", "Retrain per input horizon");
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic and numeric gradients");
  for (auto* cmd : {train, evaluate, ablate, sweep, gradcheck}) {
    cmd->add_option("--config", config_path, "Run settings as key = value lines; flags override");
    add_run_flags(cmd, run_flags);
  }
  train->add_option("--log", log_path, "Training log CSV (default <out>.log.csv)");
  evaluate->add_option("--checkpoint", checkpoint_path, "Checkpoint written by train")->required();
  sweep->add_option_function<std::string>(
      "--hours", [&](const std::string& v) { run_flags.values["sweep_hours"] = v; },
      "Comma-separated input horizons in hours (default 8,12,16,24)");
  gradcheck->add_option("--tolerance", tolerance, "Maximum relative error (default 1e-4)");
  gradcheck->add_option("--inject-fault", fault, "Corrupt one gradient coordinate of this model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_generate(config_path, gen_flags, gen_out);
    const RunConfig cfg = resolve(config_path, run_flags);
    if (train->parsed()) return cmd_train(cfg, log_path);
    if (evaluate->parsed()) return cmd_evaluate(checkpoint_path, cfg, run_flags.values);
    if (ablate->parsed()) return cmd_ablate(cfg);
    if (sweep->parsed()) return cmd_sweep(cfg);
    if (gradcheck->parsed()) return cmd_gradcheck(cfg, tolerance, fault);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
