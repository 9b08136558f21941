#include "dfds/experiment.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "dfds/error.hpp"

namespace dfds::experiment {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (value.empty() || ec != std::errc() || ptr != last) {
    throw UsageError("config '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw UsageError("config '" + key + "': expected true/false, got '" + value + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_number<double>(key, trim(item)));
  if (out.empty()) throw UsageError("config '" + key + "': empty list");
  return out;
}

}  // namespace

// ---- RunConfig ----

int RunConfig::hours_to_slots(double hours, const std::string& what) {
  const double slots = hours * 4.0;
  const double rounded = std::round(slots);
  if (!(hours > 0.0) || std::abs(slots - rounded) > 1e-9) {
    throw UsageError(what + " of " + format_double(hours) +
                     " h is not a positive whole number of 15-minute slots");
  }
  return static_cast<int>(rounded);
}

int RunConfig::input_len() const { return hours_to_slots(input_hours, "input horizon"); }
int RunConfig::output_len() const { return hours_to_slots(output_hours, "output horizon"); }

void RunConfig::validate() const {
  input_len();
  output_len();
  for (double h : sweep_hours) hours_to_slots(h, "sweep horizon");
  if (hidden < 1) throw UsageError("hidden size must be >= 1");
  if (test_weeks < 1) throw UsageError("test_weeks must be >= 1");
  if (train_stride < 1 || eval_stride < 1) throw UsageError("strides must be >= 1");
  if (grad_clip_norm && !(*grad_clip_norm > 0.0)) throw UsageError("grad_clip must be positive");
  model::parse_ablation(ablation);
  train_config().validate();
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "data") data_path = value;
  else if (key == "out") out_path = value;
  else if (key == "model") model = value;
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "input_hours") input_hours = parse_number<double>(key, value);
  else if (key == "output_hours") output_hours = parse_number<double>(key, value);
  else if (key == "hidden") hidden = parse_number<int>(key, value);
  else if (key == "epochs") epochs = parse_number<int>(key, value);
  else if (key == "lr") lr = parse_number<double>(key, value);
  else if (key == "batch_size") batch_size = parse_number<int>(key, value);
  else if (key == "threads") threads = parse_number<int>(key, value);
  else if (key == "grad_clip") {
    if (value == "none") grad_clip_norm.reset();
    else grad_clip_norm = parse_number<double>(key, value);
  } else if (key == "test_weeks") test_weeks = parse_number<int>(key, value);
  else if (key == "train_stride") train_stride = parse_number<int>(key, value);
  else if (key == "eval_stride") eval_stride = parse_number<int>(key, value);
  else if (key == "train_end") {
    if (value == "auto") train_end.reset();
    else train_end = parse_number<std::int64_t>(key, value);
  } else if (key == "weekday_profiles") weekday_profiles = parse_bool(key, value);
  else if (key == "ablation") ablation = value;
  else if (key == "sweep_hours") sweep_hours = parse_list(key, value);
  else throw UsageError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> RunConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["data"] = data_path;
  kv["out"] = out_path;
  kv["model"] = model;
  kv["seed"] = std::to_string(seed);
  kv["input_hours"] = format_double(input_hours);
  kv["output_hours"] = format_double(output_hours);
  kv["hidden"] = std::to_string(hidden);
  kv["epochs"] = std::to_string(epochs);
  kv["lr"] = format_double(lr);
  kv["batch_size"] = std::to_string(batch_size);
  kv["threads"] = std::to_string(threads);
  kv["grad_clip"] = grad_clip_norm ? format_double(*grad_clip_norm) : "none";
  kv["test_weeks"] = std::to_string(test_weeks);
  kv["train_stride"] = std::to_string(train_stride);
  kv["eval_stride"] = std::to_string(eval_stride);
  kv["train_end"] = train_end ? std::to_string(*train_end) : "auto";
  kv["weekday_profiles"] = weekday_profiles ? "true" : "false";
  kv["ablation"] = ablation;
  std::string hours;
  for (double h : sweep_hours) hours += (hours.empty() ? "" : ",") + format_double(h);
  kv["sweep_hours"] = hours;
  return kv;
}

training::TrainConfig RunConfig::train_config() const {
  training::TrainConfig t;
  t.epochs = epochs;
  t.lr = lr;
  t.batch_size = batch_size;
  t.seed = seed;
  t.grad_clip_norm = grad_clip_norm;
  t.threads = threads;
  return t;
}

baselines::ModelOptions RunConfig::model_options(model::Ablation a) const {
  baselines::ModelOptions o;
  o.input_len = input_len();
  o.output_len = output_len();
  o.hidden = hidden;
  o.ablation = a;
  o.train = train_config();
  o.seed = seed;
  return o;
}

std::map<std::string, std::string> parse_kv(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line.substr(0, line.find('#')));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(text.substr(0, eq));
    if (key.empty()) throw UsageError("config line " + std::to_string(line_no) + ": empty key");
    kv[key] = trim(text.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  return parse_kv(in);
}

void write_kv(std::ostream& out, const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

void apply_kv(RunConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) cfg.set(k, v);
}

// ---- data preparation ----

PreparedData prepare(std::span<const data::ChargingRecord> records, const RunConfig& cfg,
                     int input_len, int output_len) {
  PreparedData out;
  out.series = data::build_series(records);
  if (out.series.empty()) throw DataError("dataset holds no records");
  const data::TimeSlot train_end = cfg.train_end
                                       ? data::TimeSlot::from_timestamp(*cfg.train_end)
                                       : data::default_train_end(out.series, cfg.test_weeks);
  out.split = data::split_train_test(out.series, train_end, cfg.test_weeks);
  out.profiles = features::build_static_profiles(
      out.split.train, features::ProfileOptions{.weekday_conditioned = cfg.weekday_profiles});
  out.train_windows = data::make_windows(out.split.train, input_len, output_len, cfg.train_stride);
  if (out.train_windows.empty()) {
    throw DataError("training data too short for one window of " +
                    std::to_string(input_len + output_len) + " slots");
  }
  for (const auto& week : out.split.tests) {
    out.test_windows.push_back(data::make_windows(week, input_len, output_len, cfg.eval_stride));
  }
  return out;
}

PreparedData prepare(std::span<const data::ChargingRecord> records, const RunConfig& cfg) {
  return prepare(records, cfg, cfg.input_len(), cfg.output_len());
}

// ---- evaluation ----

metrics::MetricsReport evaluate(const baselines::Forecaster& f,
                                const std::vector<std::vector<data::Window>>& test_windows,
                                const features::ProfileSet& profiles, int chunk) {
  std::vector<metrics::SetMetrics> sets;
  for (std::size_t k = 0; k < test_windows.size(); ++k) {
    const auto& windows = test_windows[k];
    metrics::Confusion total;
    std::vector<const data::Window*> ptrs;
    for (std::size_t lo = 0; lo < windows.size(); lo += static_cast<std::size_t>(chunk)) {
      const std::size_t hi = std::min(windows.size(), lo + static_cast<std::size_t>(chunk));
      ptrs.clear();
      for (std::size_t j = lo; j < hi; ++j) ptrs.push_back(&windows[j]);
      const Matrix p = f.predict(ptrs, profiles);
      std::vector<double> preds;
      std::vector<std::uint8_t> targets;
      preds.reserve(p.size());
      targets.reserve(p.size());
      for (Index b = 0; b < p.cols(); ++b) {
        const data::Window& w = *ptrs[b];
        for (Index t = 0; t < p.rows(); ++t) {
          preds.push_back(p(t, b));
          targets.push_back(w.target_occ[t]);
        }
      }
      total += metrics::confusion(preds, targets);
    }
    sets.push_back({"week" + std::to_string(k + 1), metrics::prf(total), total});
  }
  return metrics::macro_average(std::move(sets));
}

std::unique_ptr<baselines::Forecaster> fit_model(const RunConfig& cfg, const PreparedData& data,
                                                 const std::string& model_name,
                                                 model::Ablation ablation,
                                                 const training::EpochCallback& on_epoch) {
  auto f = baselines::make_forecaster(model_name, cfg.model_options(ablation));
  if (on_epoch) {
    if (auto* d = dynamic_cast<baselines::DfdsForecaster*>(f.get())) d->set_epoch_callback(on_epoch);
    if (auto* d = dynamic_cast<baselines::Seq2SeqForecaster*>(f.get())) d->set_epoch_callback(on_epoch);
    if (auto* d = dynamic_cast<baselines::GruFcForecaster*>(f.get())) d->set_epoch_callback(on_epoch);
    if (auto* d = dynamic_cast<baselines::LogRegForecaster*>(f.get())) d->set_epoch_callback(on_epoch);
  }
  f->fit(data.training_set());
  return f;
}

// ---- checkpoints ----

checkpoint::Checkpoint make_checkpoint(const baselines::Forecaster& f, const PreparedData& data,
                                       const RunConfig& cfg) {
  checkpoint::Checkpoint ck;
  f.save(ck);
  checkpoint::store_profiles(ck, data.profiles);
  ck.config["run_input_hours"] = format_double(cfg.input_hours);
  ck.config["run_output_hours"] = format_double(cfg.output_hours);
  ck.config["run_test_weeks"] = std::to_string(cfg.test_weeks);
  ck.config["run_train_end"] = std::to_string(data.split.train_end.timestamp());
  ck.config["run_train_stride"] = std::to_string(cfg.train_stride);
  ck.config["run_eval_stride"] = std::to_string(cfg.eval_stride);
  ck.config["run_seed"] = std::to_string(cfg.seed);
  return ck;
}

LoadedRun load_run(const checkpoint::Checkpoint& ck, std::span<const data::ChargingRecord> records) {
  LoadedRun run;
  run.config.model = ck.model;
  run.config.input_hours = ck.get_double("run_input_hours");
  run.config.output_hours = ck.get_double("run_output_hours");
  run.config.test_weeks = ck.get_int("run_test_weeks");
  run.config.train_end = std::stoll(ck.get("run_train_end"));
  run.config.train_stride = ck.get_int("run_train_stride");
  run.config.eval_stride = ck.get_int("run_eval_stride");
  run.config.seed = static_cast<std::uint64_t>(std::stoull(ck.get("run_seed")));
  run.config.weekday_profiles = ck.get_bool("profile_weekday_conditioned");
  run.input_len = run.config.input_len();
  run.output_len = run.config.output_len();
  run.forecaster = baselines::load_forecaster(ck);
  run.profiles = checkpoint::load_profiles(ck);
  if (run.forecaster->refit_after_load()) {
    const PreparedData data = prepare(records, run.config);
    run.forecaster->fit(data.training_set());
  }
  return run;
}

std::vector<std::vector<data::Window>> test_windows_for(const LoadedRun& run,
                                                        std::span<const data::ChargingRecord> records) {
  const auto series = data::build_series(records);
  const auto split = data::split_train_test(
      series, data::TimeSlot::from_timestamp(*run.config.train_end), run.config.test_weeks);
  std::vector<std::vector<data::Window>> out;
  for (const auto& week : split.tests) {
    out.push_back(data::make_windows(week, run.input_len, run.output_len, run.config.eval_stride));
  }
  return out;
}

// ---- ablation ----

std::vector<AblationRow> run_ablation(const RunConfig& cfg, const PreparedData& data,
                                      const Progress& progress) {
  std::vector<model::Ablation> runs{model::Ablation::none};
  runs.insert(runs.end(), model::kAllAblations.begin(), model::kAllAblations.end());
  std::vector<AblationRow> rows;
  for (model::Ablation a : runs) {
    if (progress) progress("training " + model::to_string(a));
    const auto f = fit_model(cfg, data, "dfds", a);
    const auto report = evaluate(*f, data.test_windows, data.profiles);
    AblationRow row{model::to_string(a), report.macro};
    if (!rows.empty()) {
      const metrics::Prf& full = rows.front().macro;
      row.delta_precision_pp = 100.0 * (row.macro.precision - full.precision);
      row.delta_recall_pp = 100.0 * (row.macro.recall - full.recall);
      row.delta_f1_pp = 100.0 * (row.macro.f1 - full.f1);
    }
    if (progress) progress(row.name + " macro F1 " + format_double(row.macro.f1));
    rows.push_back(row);
  }
  return rows;
}

void write_ablation(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "ablation,precision,recall,f1,delta_precision_pp,delta_recall_pp,delta_f1_pp\n";
  for (const auto& r : rows) {
    out << r.name << ',' << format_double(r.macro.precision) << ','
        << format_double(r.macro.recall) << ',' << format_double(r.macro.f1) << ','
        << format_double(r.delta_precision_pp) << ',' << format_double(r.delta_recall_pp) << ','
        << format_double(r.delta_f1_pp) << '\n';
  }
}

// ---- horizon sweep ----

std::vector<SweepRow> run_sweep(const RunConfig& cfg, std::span<const data::ChargingRecord> records,
                                const Progress& progress) {
  std::vector<SweepRow> rows;
  for (double hours : cfg.sweep_hours) {
    RunConfig c = cfg;
    c.input_hours = hours;
    const PreparedData data = prepare(records, c);
    if (progress) progress("training " + cfg.model + " with input horizon " + format_double(hours) + " h");
    const auto f = fit_model(c, data, c.model, model::parse_ablation(c.ablation));
    const auto report = evaluate(*f, data.test_windows, data.profiles);
    rows.push_back({hours, c.input_len(), report.macro});
  }
  return rows;
}

void write_sweep(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "input_hours,i,precision,recall,f1\n";
  for (const auto& r : rows) {
    out << format_double(r.input_hours) << ',' << r.input_len << ','
        << format_double(r.macro.precision) << ',' << format_double(r.macro.recall) << ','
        << format_double(r.macro.f1) << '\n';
  }
}

// ---- gradient checks ----

namespace {

struct TinyFixture {
  std::vector<data::Window> windows;
  features::ProfileSet profiles;
};

// Two stations, two random days each, and four windows at random offsets.
TinyFixture tiny_fixture(std::uint64_t seed, int input_len, int output_len) {
  Rng rng(seed);
  std::vector<data::StationSeries> series;
  for (const char* id : {"a", "b"}) {
    data::StationSeries s{id, data::TimeSlot{18000 + static_cast<std::int64_t>(rng.below(96))}, {}};
    for (int k = 0; k < 2 * 96; ++k) s.occupancy.push_back(rng.uniform() < 0.4 ? 1 : 0);
    series.push_back(std::move(s));
  }
  TinyFixture f;
  f.profiles = features::build_static_profiles(series);
  const int span = input_len + output_len;
  for (int k = 0; k < 4; ++k) {
    const auto& s = series[k % 2];
    const auto all = data::make_windows(s, input_len, output_len, 1);
    f.windows.push_back(all[rng.below(static_cast<std::uint64_t>(s.size() - span + 1))]);
  }
  return f;
}

template <typename Model>
training::GradCheckReport check_model(const typename Model::Config& cfg, std::uint64_t seed,
                                      double tolerance, bool fault) {
  const TinyFixture fx = tiny_fixture(seed, cfg.input_len, cfg.output_len);
  Rng rng(seed);
  Model model = Model::initialized(cfg, rng);
  // Zero biases put ReLU inputs exactly on the kink whenever a static row is
  // all zeros; jitter them so the check runs at a differentiable point.
  model.params.visit_blocks([&](std::string_view name, auto& m) {
    const auto leaf = name.substr(name.rfind('/') + 1);
    if (!leaf.starts_with('b')) return;
    for (Index k = 0; k < m.size(); ++k) m.data()[k] += 0.1 * rng.normal();
  });
  std::vector<const data::Window*> ptrs;
  for (const auto& w : fx.windows) ptrs.push_back(&w);
  std::optional<Index> corrupt;
  if (fault) {
    auto grad = model.zero_like();
    model.loss_and_gradient(ptrs, fx.profiles, grad, typename Model::Scalar(1));
    const auto flat = flatten(grad);
    Index arg = 0;
    flat.cwiseAbs().maxCoeff(&arg);
    corrupt = arg;
  }
  return training::gradient_check(model, ptrs, fx.profiles, tolerance, 1e-5, corrupt);
}

}  // namespace

std::vector<GradcheckRow> run_gradchecks(std::uint64_t seed, double tolerance,
                                         const std::optional<std::string>& fault_model) {
  constexpr int kD = 4, kI = 3, kO = 3;
  if (fault_model && *fault_model != "dfds" && *fault_model != "seq2seq" &&
      *fault_model != "gru_fc" && *fault_model != "logreg") {
    throw UsageError("unknown model '" + *fault_model + "' for fault injection");
  }
  const auto fault = [&](const char* name) { return fault_model && *fault_model == name; };
  model::DfdsConfig dcfg;
  dcfg.input_len = kI;
  dcfg.output_len = kO;
  dcfg.d_encoder = dcfg.d_static = dcfg.d_fusion = dcfg.d_decoder = kD;
  const model::SequenceConfig scfg{kI, kO, kD};
  using LD = long double;
  std::vector<GradcheckRow> rows;
  rows.push_back({"dfds", seed, check_model<model::DfdsModel<LD>>(dcfg, seed, tolerance, fault("dfds"))});
  rows.push_back({"seq2seq", seed,
                  check_model<model::Seq2SeqModel<LD>>(scfg, seed, tolerance, fault("seq2seq"))});
  rows.push_back({"gru_fc", seed,
                  check_model<model::GruFcModel<LD>>(scfg, seed, tolerance, fault("gru_fc"))});
  rows.push_back({"logreg", seed,
                  check_model<model::LogRegModel<LD>>(scfg, seed, tolerance, fault("logreg"))});
  return rows;
}

void write_gradchecks(std::ostream& out, const std::vector<GradcheckRow>& rows) {
  out << "model,seed,coordinates,max_rel_err,worst_coordinate,analytic,numeric,status\n";
  for (const auto& r : rows) {
    char err[64];
    std::snprintf(err, sizeof err, "%.3e", r.report.max_rel_err);
    out << r.model << ',' << r.seed << ',' << r.report.coordinates << ',' << err << ','
        << r.report.worst_coordinate << ',' << format_double(r.report.analytic) << ','
        << format_double(r.report.numeric) << ',' << (r.report.pass ? "pass" : "FAIL") << '\n';
  }
}

void write_loss_log(std::ostream& out, const std::vector<double>& loss_history) {
  out << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < loss_history.size(); ++e) {
    out << e + 1 << ',' << format_double(loss_history[e]) << '\n';
  }
}

}  // namespace dfds::experiment
