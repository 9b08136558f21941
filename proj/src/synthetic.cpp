#include "dfds/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dfds/error.hpp"
#include "dfds/numerics.hpp"

namespace dfds::data {

namespace {

// Trapezoid on hours-of-day: 1 inside [from, to], linear one-hour ramps.
double plateau(double hour, double from, double to) {
  const double rise = std::clamp(hour - from + 0.5, 0.0, 1.0);
  const double fall = std::clamp(to - hour + 0.5, 0.0, 1.0);
  return std::min(rise, fall);
}

Archetype draw_archetype(const std::array<double, 4>& mix, Rng& rng) {
  double total = 0.0;
  for (double w : mix) total += w;
  double u = rng.uniform() * total;
  for (int k = 0; k < 4; ++k) {
    if (u < mix[k]) return static_cast<Archetype>(k);
    u -= mix[k];
  }
  return Archetype::uniform;
}

struct StationChain {
  std::array<double, TimeSlot::kPerWeek> intensity;  // scale * archetype shape
};

std::int64_t weekly_index(TimeSlot slot) { return slot.weekday() * TimeSlot::kPerDay + slot.slot_of_day(); }

// Mean over the horizon of P(occupied), starting free.
double expected_occupancy(const std::vector<StationChain>& chains, double calibration,
                          double stay, TimeSlot start, std::int64_t n_slots) {
  double total = 0.0;
  for (const auto& chain : chains) {
    double p = 0.0;
    for (std::int64_t k = 0; k < n_slots; ++k) {
      const double arrive = std::min(1.0, calibration * chain.intensity[weekly_index(start + k)]);
      p = p * stay + (1.0 - p) * arrive;
      total += p;
    }
  }
  return total / (static_cast<double>(chains.size()) * static_cast<double>(n_slots));
}

}  // namespace

std::string to_string(Archetype a) {
  switch (a) {
    case Archetype::office:
      return "office";
    case Archetype::retail:
      return "retail";
    case Archetype::residential:
      return "residential";
    case Archetype::uniform:
      return "uniform";
  }
  return "unknown";
}

double archetype_intensity(Archetype a, int weekday, int slot_of_day) {
  const double hour = slot_of_day / 4.0;
  const bool weekend = weekday >= 5;
  switch (a) {
    case Archetype::office:
      return weekend ? 0.02 + 0.08 * plateau(hour, 10.0, 15.0)
                     : 0.02 + 0.98 * plateau(hour, 8.0, 17.0);
    case Archetype::retail: {
      const double day_weight = weekday == 5 ? 1.0 : (weekday == 6 ? 0.7 : 0.55);
      return 0.03 + 0.97 * day_weight * plateau(hour, 13.0, 20.0) +
             0.15 * plateau(hour, 9.0, 12.0);
    }
    case Archetype::residential: {
      const double night = std::max(plateau(hour, 18.0, 24.5), plateau(hour, -0.5, 6.5));
      return 0.03 + (weekend ? 0.6 : 0.97) * night + (weekend ? 0.35 * plateau(hour, 10.0, 16.0) : 0.0);
    }
    case Archetype::uniform:
      return 1.0;
  }
  return 0.0;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
  if (!(config.target_rate > 0.0 && config.target_rate < 1.0)) {
    throw DataError("synthetic: target_rate must lie in (0, 1)");
  }
  if (config.n_stations < 1 || config.n_weeks < 1) {
    throw DataError("synthetic: n_stations and n_weeks must be >= 1");
  }
  if (!(config.mean_dwell_slots >= 1.0)) {
    throw DataError("synthetic: mean_dwell_slots must be >= 1");
  }
  const TimeSlot start = TimeSlot::from_timestamp(config.start_timestamp);
  const std::int64_t n_slots = static_cast<std::int64_t>(config.n_weeks) * TimeSlot::kPerWeek;
  const double stay = 1.0 - 1.0 / config.mean_dwell_slots;

  SyntheticDataset out;
  Rng rng(config.seed);
  std::vector<StationChain> chains(config.n_stations);
  double min_positive = 1.0;
  for (int s = 0; s < config.n_stations; ++s) {
    char id[32];
    std::snprintf(id, sizeof id, "st%03d", s);
    out.station_ids.emplace_back(id);
    const Archetype a = draw_archetype(config.archetype_mix, rng);
    const double scale =
        config.station_scale_sigma > 0.0 ? std::exp(config.station_scale_sigma * rng.normal()) : 1.0;
    out.archetypes.push_back(a);
    out.station_scales.push_back(scale);
    for (int k = 0; k < TimeSlot::kPerWeek; ++k) {
      const double v = scale * archetype_intensity(a, k / TimeSlot::kPerDay, k % TimeSlot::kPerDay);
      chains[s].intensity[k] = v;
      if (v > 0.0) min_positive = std::min(min_positive, v);
    }
  }

  // Every arrival probability saturates at 1 beyond this multiplier.
  const double saturated = 1.0 / min_positive;
  const double best = expected_occupancy(chains, saturated, stay, start, n_slots);
  if (config.target_rate >= best) {
    throw DataError("synthetic: target_rate " + std::to_string(config.target_rate) +
                    " unreachable with mean dwell " + std::to_string(config.mean_dwell_slots) +
                    " slots (max " + std::to_string(best) + ")");
  }
  double lo = 0.0;
  double hi = saturated;
  for (int iter = 0; iter < 80; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (expected_occupancy(chains, mid, stay, start, n_slots) < config.target_rate) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  out.calibration = 0.5 * (lo + hi);
  out.expected_rate = expected_occupancy(chains, out.calibration, stay, start, n_slots);

  out.records.reserve(static_cast<std::size_t>(config.n_stations) * n_slots);
  for (int s = 0; s < config.n_stations; ++s) {
    Rng station_rng = rng.fork(static_cast<std::uint64_t>(s));
    bool occupied = false;
    for (std::int64_t k = 0; k < n_slots; ++k) {
      const TimeSlot slot = start + k;
      if (occupied) {
        occupied = station_rng.uniform() < stay;
      } else {
        const double arrive =
            std::min(1.0, out.calibration * chains[s].intensity[weekly_index(slot)]);
        occupied = station_rng.uniform() < arrive;
      }
      out.records.push_back({out.station_ids[s], slot, static_cast<std::uint8_t>(occupied)});
    }
  }
  return out;
}

}  // namespace dfds::data
