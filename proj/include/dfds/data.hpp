#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dfds::data {

/// One 15-minute interval, counted from the Unix epoch (UTC).
struct TimeSlot {
  static constexpr std::int64_t kSeconds = 900;
  static constexpr std::int64_t kPerDay = 96;
  static constexpr std::int64_t kPerWeek = 7 * kPerDay;

  std::int64_t epoch_slot = 0;

  /// Throws DataError unless `seconds` lies on the 900 s grid.
  static TimeSlot from_timestamp(std::int64_t seconds);

  std::int64_t timestamp() const { return epoch_slot * kSeconds; }
  std::int64_t day() const;
  /// 0 = Monday. 1970-01-01 was a Thursday.
  int weekday() const { return static_cast<int>(((day() + 3) % 7 + 7) % 7); }
  int slot_of_day() const { return static_cast<int>(epoch_slot - day() * kPerDay); }
  int hour() const { return slot_of_day() / 4; }
  int quarter() const { return slot_of_day() % 4; }

  TimeSlot operator+(std::int64_t n) const { return {epoch_slot + n}; }
  TimeSlot operator-(std::int64_t n) const { return {epoch_slot - n}; }
  std::int64_t operator-(TimeSlot other) const { return epoch_slot - other.epoch_slot; }
  auto operator<=>(const TimeSlot&) const = default;
};

struct ChargingRecord {
  std::string station_id;
  TimeSlot slot;
  std::uint8_t occupied = 0;

  bool operator==(const ChargingRecord&) const = default;
};

/// Gap-free occupancy run of one station: occupancy[k] belongs to slot start + k.
struct StationSeries {
  std::string station_id;
  TimeSlot start;
  std::vector<std::uint8_t> occupancy;

  std::int64_t size() const { return static_cast<std::int64_t>(occupancy.size()); }
  /// One past the last slot.
  TimeSlot end() const { return start + size(); }
};

/// One example: `input_occ` covers input_start .. input_start+i-1 and
/// `target_occ` the o slots immediately after.
struct Window {
  std::string station_id;
  TimeSlot input_start;
  std::vector<std::uint8_t> input_occ;
  std::vector<std::uint8_t> target_occ;

  int input_len() const { return static_cast<int>(input_occ.size()); }
  int output_len() const { return static_cast<int>(target_occ.size()); }
  TimeSlot input_slot(int t) const { return input_start + t; }
  TimeSlot target_slot(int t) const { return input_start + input_len() + t; }
  std::vector<TimeSlot> target_slots() const;
};

struct DatasetSplit {
  std::vector<StationSeries> train;
  /// One entry per test week, in chronological order.
  std::vector<std::vector<StationSeries>> tests;
  TimeSlot train_end;
};

struct ParseResult {
  std::vector<ChargingRecord> records;  // sorted by station_id, then slot
  std::int64_t duplicate_count = 0;
};

/// Reads `station_id,timestamp,occupied` CSV. Duplicate (station, slot) rows
/// keep the last occurrence. Throws DataError with the offending line number.
ParseResult parse_records(std::istream& in);
ParseResult read_records_file(const std::string& path);

/// Canonical CSV: header, LF line endings, rows in the given order.
void write_records(std::ostream& out, std::span<const ChargingRecord> records);
void write_records_file(const std::string& path, std::span<const ChargingRecord> records);

/// Groups records per station into maximal gap-free runs, ordered by
/// station_id and start slot.
std::vector<StationSeries> build_series(std::span<const ChargingRecord> records);

/// Latest slot start such that `n_test_weeks` full weeks follow it.
TimeSlot default_train_end(std::span<const StationSeries> series, int n_test_weeks);

/// Everything before `train_end` is training data; test set k covers
/// [train_end + 672k, train_end + 672(k+1)).
DatasetSplit split_train_test(std::span<const StationSeries> series, TimeSlot train_end,
                              int n_test_weeks);

/// Windows at offsets 0, stride, 2*stride, ... that fit inside the series.
std::vector<Window> make_windows(const StationSeries& series, int input_len, int output_len,
                                 int stride);
std::vector<Window> make_windows(std::span<const StationSeries> series, int input_len,
                                 int output_len, int stride);

/// Number of windows make_windows produces for a series of this length.
std::int64_t window_count(std::int64_t length, int input_len, int output_len, int stride);

}  // namespace dfds::data
