#include "dfds/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "dfds/error.hpp"

namespace dfds::features {

DynamicFeatures encode_dynamic(bool occupied, TimeSlot slot) {
  DynamicFeatures f{};
  f[kOccupancyOffset] = occupied ? 1.0 : 0.0;
  f[kWeekdayOffset + slot.weekday()] = 1.0;
  f[kHourOffset + slot.hour()] = 1.0;
  f[kQuarterOffset + slot.quarter()] = 1.0;
  return f;
}

double nearest_rank_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DataError("nearest_rank_quantile: empty sample");
  if (!(q > 0.0 && q <= 1.0)) throw DataError("nearest_rank_quantile: q must lie in (0, 1]");
  const double n = static_cast<double>(sorted.size());
  // tolerance absorbs products like 0.1 * 30 = 3.0000000000000004
  auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

int StaticProfile::bucket(TimeSlot slot) const {
  return weekday_conditioned ? slot.weekday() * static_cast<int>(TimeSlot::kPerDay) + slot.slot_of_day()
                             : slot.slot_of_day();
}

double StaticProfile::value(StaticFeature f, int b) const {
  switch (f) {
    case StaticFeature::mean:
      return mean_occ[b];
    case StaticFeature::q25:
      return q25_occ[b];
    case StaticFeature::q75:
      return q75_occ[b];
  }
  return 0.0;
}

const StaticProfile& ProfileSet::lookup(const std::string& station_id) const {
  const auto it = stations.find(station_id);
  return it == stations.end() ? global : it->second;
}

namespace {

struct BucketSamples {
  std::vector<std::vector<double>> values;
  explicit BucketSamples(int buckets) : values(buckets) {}
};

StaticProfile summarize(const std::string& id, bool weekday_conditioned, BucketSamples& samples) {
  StaticProfile p;
  p.station_id = id;
  p.weekday_conditioned = weekday_conditioned;
  const int n = static_cast<int>(samples.values.size());
  p.mean_occ.assign(n, 0.0);
  p.q25_occ.assign(n, 0.0);
  p.q75_occ.assign(n, 0.0);
  p.sample_count.assign(n, 0);

  double total = 0.0;
  std::int64_t count = 0;
  for (const auto& v : samples.values) {
    for (double x : v) total += x;
    count += static_cast<std::int64_t>(v.size());
  }
  const double overall = count > 0 ? total / static_cast<double>(count) : 0.0;

  for (int b = 0; b < n; ++b) {
    auto& v = samples.values[b];
    p.sample_count[b] = static_cast<std::int64_t>(v.size());
    if (v.empty()) {
      p.mean_occ[b] = p.q25_occ[b] = p.q75_occ[b] = overall;
      continue;
    }
    std::sort(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += x;
    p.mean_occ[b] = sum / static_cast<double>(v.size());
    p.q25_occ[b] = nearest_rank_quantile(v, 0.25);
    p.q75_occ[b] = nearest_rank_quantile(v, 0.75);
  }
  return p;
}

}  // namespace

ProfileSet build_static_profiles(std::span<const StationSeries> train, ProfileOptions options) {
  const int buckets = options.weekday_conditioned ? static_cast<int>(TimeSlot::kPerWeek)
                                                  : static_cast<int>(TimeSlot::kPerDay);
  StaticProfile layout;
  layout.weekday_conditioned = options.weekday_conditioned;

  std::map<std::string, BucketSamples> per_station;
  BucketSamples pooled(buckets);
  std::int64_t total = 0;
  for (const auto& s : train) {
    auto& samples = per_station.try_emplace(s.station_id, buckets).first->second;
    for (std::int64_t k = 0; k < s.size(); ++k) {
      const int b = layout.bucket(s.start + k);
      const double v = s.occupancy[k];
      samples.values[b].push_back(v);
      pooled.values[b].push_back(v);
    }
    total += s.size();
  }
  if (total == 0) throw DataError("static profiles: training data is empty");

  ProfileSet set;
  for (auto& [id, samples] : per_station) {
    bool any = false;
    for (const auto& v : samples.values) any = any || !v.empty();
    if (!any) {
      set.excluded.push_back(id);
      continue;
    }
    set.stations.emplace(id, summarize(id, options.weekday_conditioned, samples));
  }
  set.global = summarize(kGlobalProfileId, options.weekday_conditioned, pooled);
  return set;
}

StaticRows static_rows_for_window(const ProfileSet& profiles, const Window& window) {
  const StaticProfile& p = profiles.lookup(window.station_id);
  StaticRows out;
  for (auto& r : out.rows) r.resize(window.output_len());
  for (int t = 0; t < window.output_len(); ++t) {
    const int b = p.bucket(window.target_slot(t));
    out.rows[0][t] = p.mean_occ[b];
    out.rows[1][t] = p.q25_occ[b];
    out.rows[2][t] = p.q75_occ[b];
  }
  return out;
}

namespace {

void write_profile(std::ostream& out, const StaticProfile& p, const std::string& id) {
  char line[256];
  for (int b = 0; b < p.bucket_count(); ++b) {
    std::snprintf(line, sizeof line, "%s,%d,%.17g,%.17g,%.17g,%lld\n", id.c_str(), b,
                  p.mean_occ[b], p.q25_occ[b], p.q75_occ[b],
                  static_cast<long long>(p.sample_count[b]));
    out << line;
  }
}

}  // namespace

void write_profiles(std::ostream& out, const ProfileSet& profiles) {
  out << "station_id,slot_of_day,mean,q25,q75,count\n";
  for (const auto& [id, p] : profiles.stations) write_profile(out, p, id);
  write_profile(out, profiles.global, kGlobalProfileId);
}

ProfileSet read_profiles(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("profiles: empty input");
  std::map<std::string, std::vector<std::array<double, 4>>> rows;
  std::int64_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, field;
    std::getline(ss, id, ',');
    std::array<double, 5> v{};
    for (int k = 0; k < 5; ++k) {
      if (!std::getline(ss, field, ',')) {
        throw DataError("profiles: line " + std::to_string(line_no) + ": expected 6 fields");
      }
      v[k] = std::stod(field);
    }
    auto& dst = rows[id];
    const auto b = static_cast<std::size_t>(v[0]);
    if (b != dst.size()) throw DataError("profiles: line " + std::to_string(line_no) + ": slots out of order");
    dst.push_back({v[1], v[2], v[3], v[4]});
  }
  ProfileSet set;
  for (auto& [id, r] : rows) {
    StaticProfile p;
    p.station_id = id;
    p.weekday_conditioned = r.size() == static_cast<std::size_t>(TimeSlot::kPerWeek);
    for (const auto& x : r) {
      p.mean_occ.push_back(x[0]);
      p.q25_occ.push_back(x[1]);
      p.q75_occ.push_back(x[2]);
      p.sample_count.push_back(static_cast<std::int64_t>(x[3]));
    }
    if (id == kGlobalProfileId) {
      set.global = std::move(p);
    } else {
      set.stations.emplace(id, std::move(p));
    }
  }
  if (set.global.mean_occ.empty()) throw DataError("profiles: missing __GLOBAL__ rows");
  return set;
}

}  // namespace dfds::features
