#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dfds/data.hpp"

namespace dfds::features {

using data::StationSeries;
using data::TimeSlot;
using data::Window;

// Dynamic feature layout: [occupied | weekday(7) | hour(24) | quarter(4)].
inline constexpr int kOccupancyOffset = 0;
inline constexpr int kWeekdayOffset = 1;
inline constexpr int kHourOffset = 8;
inline constexpr int kQuarterOffset = 32;
inline constexpr int kDynamicDim = 36;

using DynamicFeatures = std::array<double, kDynamicDim>;

DynamicFeatures encode_dynamic(bool occupied, TimeSlot slot);

/// Element at 1-based rank ceil(q * n) of an ascending sample.
/// Throws DataError on empty input or q outside (0, 1].
double nearest_rank_quantile(std::span<const double> sorted, double q);

enum class StaticFeature { mean = 0, q25 = 1, q75 = 2 };
inline constexpr int kStaticFeatureCount = 3;

inline constexpr const char* kGlobalProfileId = "__GLOBAL__";

struct ProfileOptions {
  /// Buckets per (weekday, slot of day) instead of slot of day alone.
  bool weekday_conditioned = false;
};

/// Per-station occupancy statistics by time of day, from training data only.
struct StaticProfile {
  std::string station_id;
  bool weekday_conditioned = false;
  // Indexed by bucket(slot); 96 buckets, or 672 when weekday conditioned.
  std::vector<double> mean_occ, q25_occ, q75_occ;
  std::vector<std::int64_t> sample_count;

  int bucket_count() const { return static_cast<int>(mean_occ.size()); }
  int bucket(TimeSlot slot) const;
  double value(StaticFeature f, int bucket) const;
};

struct ProfileSet {
  std::map<std::string, StaticProfile> stations;
  StaticProfile global;
  /// Stations skipped because they had no training samples.
  std::vector<std::string> excluded;

  /// Falls back to the pooled global profile for unseen stations.
  const StaticProfile& lookup(const std::string& station_id) const;
};

/// Throws DataError when `train` holds no samples at all.
ProfileSet build_static_profiles(std::span<const StationSeries> train,
                                 ProfileOptions options = {});

/// rows[f][t] = profile value f at the slot of target t.
struct StaticRows {
  std::array<std::vector<double>, kStaticFeatureCount> rows;

  const std::vector<double>& operator[](StaticFeature f) const {
    return rows[static_cast<int>(f)];
  }
};

StaticRows static_rows_for_window(const ProfileSet& profiles, const Window& window);

/// CSV `station_id,slot_of_day,mean,q25,q75,count` with a `__GLOBAL__` block.
void write_profiles(std::ostream& out, const ProfileSet& profiles);
ProfileSet read_profiles(std::istream& in);

}  // namespace dfds::features
