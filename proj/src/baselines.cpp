#include "dfds/baselines.hpp"

#include <algorithm>
#include <numeric>

namespace dfds::baselines {

std::vector<double> Forecaster::predict_one(const Window& window, const ProfileSet& profiles) const {
  const Window* ptr = &window;
  const Matrix p = predict(std::span<const Window* const>(&ptr, 1), profiles);
  return {p.data(), p.data() + p.size()};
}

void Forecaster::require_fitted() const {
  if (!fitted()) throw UsageError(name() + ": predict called before fit");
}

namespace {

int common_output_len(std::span<const Window* const> windows) {
  if (windows.empty()) return 0;
  const int o = windows.front()->output_len();
  for (const Window* w : windows) {
    if (w->output_len() != o) throw ShapeError("windows with different output lengths in one batch");
  }
  return o;
}

}  // namespace

// ---- historical average ----

void HistoricalAverage::fit(const TrainingSet& data) {
  stations_.clear();
  global_sum_ = 0.0;
  global_count_ = 0;
  for (const auto& s : data.series) {
    auto& b = stations_[s.station_id];
    for (std::int64_t k = 0; k < s.size(); ++k) {
      const int idx = bucket(s.start + k);
      b.sum[idx] += s.occupancy[k];
      ++b.count[idx];
      b.total_sum += s.occupancy[k];
      ++b.total_count;
    }
  }
  for (const auto& [id, b] : stations_) {
    global_sum_ += b.total_sum;
    global_count_ += b.total_count;
  }
  if (global_count_ == 0) {
    fitted_ = false;
    throw DataError("historical average: no training samples");
  }
  fitted_ = true;
}

double HistoricalAverage::global_mean() const {
  return global_count_ > 0 ? global_sum_ / static_cast<double>(global_count_) : 0.0;
}

double HistoricalAverage::station_mean(const std::string& station_id) const {
  const auto it = stations_.find(station_id);
  if (it == stations_.end() || it->second.total_count == 0) return global_mean();
  return it->second.total_sum / static_cast<double>(it->second.total_count);
}

double HistoricalAverage::bucket_mean(const std::string& station_id, int bucket) const {
  const auto it = stations_.find(station_id);
  if (it == stations_.end()) return global_mean();
  const Buckets& b = it->second;
  if (b.count[bucket] == 0) return station_mean(station_id);
  return b.sum[bucket] / static_cast<double>(b.count[bucket]);
}

Matrix HistoricalAverage::predict(std::span<const Window* const> windows,
                                  const ProfileSet&) const {
  require_fitted();
  const int o = common_output_len(windows);
  Matrix out(o, static_cast<Index>(windows.size()));
  for (Index b = 0; b < out.cols(); ++b) {
    const Window& w = *windows[b];
    for (int t = 0; t < o; ++t) out(t, b) = bucket_mean(w.station_id, bucket(w.target_slot(t)));
  }
  return out;
}

void HistoricalAverage::save(checkpoint::Checkpoint& ck) const {
  require_fitted();
  ck.model = name();
  for (const auto& [id, b] : stations_) {
    Matrix m(2, kBuckets);
    for (int k = 0; k < kBuckets; ++k) {
      m(0, k) = b.sum[k];
      m(1, k) = static_cast<double>(b.count[k]);
    }
    ck.add_block("havg/" + id, std::move(m));
  }
}

void HistoricalAverage::load(const checkpoint::Checkpoint& ck) {
  if (ck.model != name()) {
    throw DataError("checkpoint holds model '" + ck.model + "', expected '" + name() + "'");
  }
  stations_.clear();
  global_sum_ = 0.0;
  global_count_ = 0;
  for (const auto& [block, m] : ck.blocks) {
    if (!block.starts_with("havg/")) continue;
    if (m.rows() != 2 || m.cols() != kBuckets) {
      throw DataError("checkpoint: block '" + block + "' has shape " + shape_string(m));
    }
    Buckets& b = stations_[block.substr(5)];
    for (int k = 0; k < kBuckets; ++k) {
      b.sum[k] = m(0, k);
      b.count[k] = static_cast<std::int64_t>(m(1, k));
      b.total_sum += b.sum[k];
      b.total_count += b.count[k];
    }
    global_sum_ += b.total_sum;
    global_count_ += b.total_count;
  }
  if (global_count_ == 0) throw DataError("checkpoint: historical average has no samples");
  fitted_ = true;
}

// ---- nearest neighbour ----

NearestNeighbor::Pool NearestNeighbor::make_pool(std::vector<std::size_t> members) const {
  Pool p;
  p.inputs.resize(static_cast<Index>(members.size()), input_len_);
  for (Index r = 0; r < p.inputs.rows(); ++r) {
    const Window& w = pool_[members[r]];
    for (int t = 0; t < input_len_; ++t) p.inputs(r, t) = w.input_occ[t];
  }
  p.sq_norms = p.inputs.rowwise().squaredNorm();
  p.members = std::move(members);
  return p;
}

void NearestNeighbor::fit(const TrainingSet& data) {
  fitted_ = false;
  if (data.windows.empty()) throw DataError("knn: empty training pool");
  input_len_ = data.windows.front().input_len();
  output_len_ = data.windows.front().output_len();
  pool_.assign(data.windows.begin(), data.windows.end());
  for (const auto& w : pool_) {
    if (w.input_len() != input_len_ || w.output_len() != output_len_) {
      throw ShapeError("knn: training windows have mixed horizons");
    }
  }
  std::stable_sort(pool_.begin(), pool_.end(), [](const Window& a, const Window& b) {
    if (a.input_start != b.input_start) return a.input_start < b.input_start;
    return a.station_id < b.station_id;
  });

  std::vector<std::size_t> all(pool_.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t k : all) groups[pool_[k].station_id].push_back(k);
  by_station_.clear();
  for (auto& [id, members] : groups) by_station_.emplace(id, make_pool(std::move(members)));
  all_ = make_pool(std::move(all));
  fitted_ = true;
}

const NearestNeighbor::Pool& NearestNeighbor::pool_for(const std::string& station_id) const {
  const auto it = by_station_.find(station_id);
  return it == by_station_.end() ? all_ : it->second;
}

std::size_t NearestNeighbor::neighbor_index(const Window& query) const {
  require_fitted();
  if (query.input_len() != input_len_) {
    throw ShapeError("knn: query input length " + std::to_string(query.input_len()) +
                     " differs from pool input length " + std::to_string(input_len_));
  }
  const Pool& pool = pool_for(query.station_id);
  Eigen::VectorXd q(input_len_);
  for (int t = 0; t < input_len_; ++t) q[t] = query.input_occ[t];
  // Bits are exact in double, so the expanded form gives exact integer distances.
  Eigen::VectorXd d = pool.sq_norms - 2.0 * pool.inputs * q;
  d.array() += q.squaredNorm();
  Index best = 0;
  for (Index r = 1; r < d.size(); ++r) {
    if (d[r] < d[best]) best = r;
  }
  return pool.members[best];
}

Matrix NearestNeighbor::predict(std::span<const Window* const> windows, const ProfileSet&) const {
  require_fitted();
  Matrix out(output_len_, static_cast<Index>(windows.size()));
  std::map<std::string, std::vector<Index>> groups;
  for (Index b = 0; b < out.cols(); ++b) {
    const Window& w = *windows[b];
    if (w.input_len() != input_len_ || w.output_len() != output_len_) {
      throw ShapeError("knn: query horizons do not match the training pool");
    }
    groups[w.station_id].push_back(b);
  }
  constexpr Index kChunk = 256;
  for (const auto& [id, cols] : groups) {
    const Pool& pool = pool_for(id);
    for (std::size_t lo = 0; lo < cols.size(); lo += kChunk) {
      const auto m = static_cast<Index>(std::min<std::size_t>(kChunk, cols.size() - lo));
      Matrix q(input_len_, m);
      for (Index j = 0; j < m; ++j) {
        const Window& w = *windows[cols[lo + j]];
        for (int t = 0; t < input_len_; ++t) q(t, j) = w.input_occ[t];
      }
      // d(j, r): distance from query j to pool member r
      Matrix d = -2.0 * q.transpose() * pool.inputs.transpose();
      d.rowwise() += pool.sq_norms.transpose();
      d.colwise() += q.colwise().squaredNorm().transpose();
      for (Index j = 0; j < m; ++j) {
        Index best = 0;
        for (Index r = 1; r < d.cols(); ++r) {
          if (d(j, r) < d(j, best)) best = r;
        }
        const Window& nn = pool_[pool.members[best]];
        for (int t = 0; t < output_len_; ++t) out(t, cols[lo + j]) = nn.target_occ[t];
      }
    }
  }
  return out;
}

void NearestNeighbor::save(checkpoint::Checkpoint& ck) const {
  require_fitted();
  ck.model = name();
  ck.config["input_len"] = std::to_string(input_len_);
  ck.config["output_len"] = std::to_string(output_len_);
}

void NearestNeighbor::load(const checkpoint::Checkpoint& ck) {
  if (ck.model != name()) {
    throw DataError("checkpoint holds model '" + ck.model + "', expected '" + name() + "'");
  }
  input_len_ = ck.get_int("input_len");
  output_len_ = ck.get_int("output_len");
  pool_.clear();
  by_station_.clear();
  all_ = {};
  fitted_ = false;
}

// ---- configuration records ----

void store_config(checkpoint::Checkpoint& ck, const model::DfdsConfig& cfg) {
  const auto b = [](bool v) { return std::string(v ? "1" : "0"); };
  ck.config["input_len"] = std::to_string(cfg.input_len);
  ck.config["output_len"] = std::to_string(cfg.output_len);
  ck.config["d_encoder"] = std::to_string(cfg.d_encoder);
  ck.config["d_static"] = std::to_string(cfg.d_static);
  ck.config["d_fusion"] = std::to_string(cfg.d_fusion);
  ck.config["d_decoder"] = std::to_string(cfg.d_decoder);
  ck.config["use_encoder"] = b(cfg.use_encoder);
  ck.config["use_occupation"] = b(cfg.use_occupation);
  ck.config["use_weekday"] = b(cfg.use_weekday);
  ck.config["use_time_of_day"] = b(cfg.use_time_of_day);
  ck.config["use_mean"] = b(cfg.use_static[0]);
  ck.config["use_q25"] = b(cfg.use_static[1]);
  ck.config["use_q75"] = b(cfg.use_static[2]);
}

void load_config(const checkpoint::Checkpoint& ck, model::DfdsConfig& cfg) {
  cfg.input_len = ck.get_int("input_len");
  cfg.output_len = ck.get_int("output_len");
  cfg.d_encoder = ck.get_int("d_encoder");
  cfg.d_static = ck.get_int("d_static");
  cfg.d_fusion = ck.get_int("d_fusion");
  cfg.d_decoder = ck.get_int("d_decoder");
  cfg.use_encoder = ck.get_bool("use_encoder");
  cfg.use_occupation = ck.get_bool("use_occupation");
  cfg.use_weekday = ck.get_bool("use_weekday");
  cfg.use_time_of_day = ck.get_bool("use_time_of_day");
  cfg.use_static = {ck.get_bool("use_mean"), ck.get_bool("use_q25"), ck.get_bool("use_q75")};
  try {
    cfg.validate();
  } catch (const ShapeError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

void store_config(checkpoint::Checkpoint& ck, const model::SequenceConfig& cfg) {
  ck.config["input_len"] = std::to_string(cfg.input_len);
  ck.config["output_len"] = std::to_string(cfg.output_len);
  ck.config["hidden"] = std::to_string(cfg.hidden);
}

void load_config(const checkpoint::Checkpoint& ck, model::SequenceConfig& cfg) {
  cfg.input_len = ck.get_int("input_len");
  cfg.output_len = ck.get_int("output_len");
  cfg.hidden = ck.get_int("hidden");
  try {
    cfg.validate();
  } catch (const ShapeError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

// ---- factory ----

std::unique_ptr<Forecaster> make_forecaster(std::string_view name, const ModelOptions& opt) {
  const model::SequenceConfig seq{opt.input_len, opt.output_len, opt.hidden};
  if (name == "dfds") {
    model::DfdsConfig cfg;
    cfg.input_len = opt.input_len;
    cfg.output_len = opt.output_len;
    cfg.d_encoder = cfg.d_static = cfg.d_fusion = cfg.d_decoder = opt.hidden;
    cfg = model::DfdsConfig::with_ablation(cfg, opt.ablation);
    cfg.validate();
    return std::make_unique<DfdsForecaster>(cfg, opt.train, opt.seed);
  }
  if (opt.ablation != model::Ablation::none) {
    throw UsageError("ablations apply to the dfds model only");
  }
  if (name == "havg") return std::make_unique<HistoricalAverage>();
  if (name == "knn") return std::make_unique<NearestNeighbor>();
  if (name == "logreg") return std::make_unique<LogRegForecaster>(seq, opt.train, opt.seed);
  if (name == "gru_fc") return std::make_unique<GruFcForecaster>(seq, opt.train, opt.seed);
  if (name == "seq2seq") return std::make_unique<Seq2SeqForecaster>(seq, opt.train, opt.seed);
  std::string known;
  for (auto n : kModelNames) known += (known.empty() ? "" : "|") + std::string(n);
  throw UsageError("unknown model '" + std::string(name) + "' (expected " + known + ")");
}

std::unique_ptr<Forecaster> load_forecaster(const checkpoint::Checkpoint& ck) {
  auto f = make_forecaster(ck.model, ModelOptions{});
  f->load(ck);
  return f;
}

}  // namespace dfds::baselines
