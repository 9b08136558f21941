#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dfds/data.hpp"

namespace dfds::data {

enum class Archetype { office, retail, residential, uniform };

std::string to_string(Archetype a);

/// Relative arrival intensity in [0, 1] for a weekday (0 = Monday) and slot of day.
double archetype_intensity(Archetype a, int weekday, int slot_of_day);

struct SyntheticConfig {
  int n_stations = 50;
  int n_weeks = 20;
  /// Sampling weights for office, retail, residential, uniform.
  std::array<double, 4> archetype_mix{0.3, 0.3, 0.3, 0.1};
  double target_rate = 0.088;
  double mean_dwell_slots = 6.0;
  /// Spread of the per-station log-normal popularity multiplier; 0 disables it.
  double station_scale_sigma = 0.7;
  std::uint64_t seed = 7;
  /// Monday 2020-08-03 00:00 UTC.
  std::int64_t start_timestamp = 1596412800;
};

struct SyntheticDataset {
  std::vector<ChargingRecord> records;  // sorted by station_id, then slot
  std::vector<std::string> station_ids;
  std::vector<Archetype> archetypes;
  std::vector<double> station_scales;
  /// Solved multiplier applied to every arrival intensity.
  double calibration = 0.0;
  /// Expected global occupancy implied by the calibrated chain.
  double expected_rate = 0.0;
};

/// Each station runs a two-state Markov chain per slot. When free it becomes
/// occupied with probability min(1, calibration * scale * intensity); when
/// occupied it stays with probability 1 - 1/mean_dwell_slots. The calibration
/// constant is solved by bisection on the exact expected occupancy.
/// Throws DataError when the target rate cannot be reached.
SyntheticDataset generate_synthetic(const SyntheticConfig& config);

}  // namespace dfds::data
