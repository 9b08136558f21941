#include "dfds/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string_view>

#include "dfds/error.hpp"

namespace dfds::data {

namespace {

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

template <typename T>
bool parse_integer(std::string_view text, T& out) {
  if (text.empty()) return false;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

TimeSlot TimeSlot::from_timestamp(std::int64_t seconds) {
  if (seconds % kSeconds != 0) {
    throw DataError("timestamp " + std::to_string(seconds) +
                    " is not aligned to the 900 s grid (offset " +
                    std::to_string(((seconds % kSeconds) + kSeconds) % kSeconds) + " s)");
  }
  return {seconds / kSeconds};
}

std::int64_t TimeSlot::day() const { return floor_div(epoch_slot, kPerDay); }

std::vector<TimeSlot> Window::target_slots() const {
  std::vector<TimeSlot> slots;
  slots.reserve(target_occ.size());
  for (int t = 0; t < output_len(); ++t) slots.push_back(target_slot(t));
  return slots;
}

ParseResult parse_records(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("line 1: empty input, expected CSV header");
  std::string_view header = trim_cr(line);
  if (header.starts_with("\xEF\xBB\xBF")) header.remove_prefix(3);
  if (header != "station_id,timestamp,occupied") {
    throw DataError("line 1: expected header 'station_id,timestamp,occupied', got '" +
                    std::string(header) + "'");
  }

  struct Row {
    ChargingRecord record;
    std::int64_t order;
  };
  std::vector<Row> rows;
  std::int64_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = trim_cr(line);
    if (text.empty()) continue;
    const auto c1 = text.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : text.find(',', c1 + 1);
    if (c2 == std::string_view::npos || text.find(',', c2 + 1) != std::string_view::npos) {
      throw DataError("line " + std::to_string(line_no) + ": expected 3 fields");
    }
    const std::string_view station = text.substr(0, c1);
    const std::string_view ts_text = text.substr(c1 + 1, c2 - c1 - 1);
    const std::string_view occ_text = text.substr(c2 + 1);
    if (station.empty()) throw DataError("line " + std::to_string(line_no) + ": empty station_id");
    std::int64_t ts = 0;
    if (!parse_integer(ts_text, ts)) {
      throw DataError("line " + std::to_string(line_no) + ": invalid timestamp '" +
                      std::string(ts_text) + "'");
    }
    if (occ_text != "0" && occ_text != "1") {
      throw DataError("line " + std::to_string(line_no) + ": occupied must be 0 or 1, got '" +
                      std::string(occ_text) + "'");
    }
    TimeSlot slot;
    try {
      slot = TimeSlot::from_timestamp(ts);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    rows.push_back({{std::string(station), slot, static_cast<std::uint8_t>(occ_text == "1")},
                    line_no});
  }

  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.record.station_id != b.record.station_id) return a.record.station_id < b.record.station_id;
    return a.record.slot < b.record.slot;
  });

  ParseResult result;
  result.records.reserve(rows.size());
  for (auto& row : rows) {
    if (!result.records.empty() && result.records.back().station_id == row.record.station_id &&
        result.records.back().slot == row.record.slot) {
      // stable sort keeps file order within a key, so this row is later
      result.records.back() = std::move(row.record);
      ++result.duplicate_count;
    } else {
      result.records.push_back(std::move(row.record));
    }
  }
  return result;
}

ParseResult read_records_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  return parse_records(in);
}

void write_records(std::ostream& out, std::span<const ChargingRecord> records) {
  out << "station_id,timestamp,occupied\n";
  for (const auto& r : records) {
    out << r.station_id << ',' << r.slot.timestamp() << ',' << static_cast<int>(r.occupied)
        << '\n';
  }
}

void write_records_file(const std::string& path, std::span<const ChargingRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_records(out, records);
  if (!out) throw DataError("write failed for '" + path + "'");
}

std::vector<StationSeries> build_series(std::span<const ChargingRecord> records) {
  std::vector<const ChargingRecord*> sorted;
  sorted.reserve(records.size());
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
    if (a->station_id != b->station_id) return a->station_id < b->station_id;
    return a->slot < b->slot;
  });

  std::vector<StationSeries> series;
  for (const auto* r : sorted) {
    if (!series.empty()) {
      auto& cur = series.back();
      if (cur.station_id == r->station_id) {
        if (r->slot == cur.end() - 1) {
          // duplicate slot; keep the later record
          cur.occupancy.back() = r->occupied;
          continue;
        }
        if (r->slot == cur.end()) {
          cur.occupancy.push_back(r->occupied);
          continue;
        }
      }
    }
    series.push_back({r->station_id, r->slot, {r->occupied}});
  }
  return series;
}

TimeSlot default_train_end(std::span<const StationSeries> series, int n_test_weeks) {
  if (series.empty()) throw DataError("no data: cannot place the train/test boundary");
  TimeSlot last = series.front().end();
  for (const auto& s : series) last = std::max(last, s.end());
  return last + (-static_cast<std::int64_t>(n_test_weeks) * TimeSlot::kPerWeek);
}

namespace {

// Copies the part of `s` inside [from, to) if non-empty.
void clip_into(const StationSeries& s, TimeSlot from, TimeSlot to, std::vector<StationSeries>& out) {
  const TimeSlot lo = std::max(from, s.start);
  const TimeSlot hi = std::min(to, s.end());
  if (lo >= hi) return;
  StationSeries part{s.station_id, lo, {}};
  part.occupancy.assign(s.occupancy.begin() + (lo - s.start), s.occupancy.begin() + (hi - s.start));
  out.push_back(std::move(part));
}

}  // namespace

DatasetSplit split_train_test(std::span<const StationSeries> series, TimeSlot train_end,
                              int n_test_weeks) {
  if (n_test_weeks < 1) throw DataError("split: n_test_weeks must be >= 1");
  if (series.empty()) throw DataError("split: no data");
  TimeSlot last = series.front().end();
  for (const auto& s : series) last = std::max(last, s.end());
  const std::int64_t required = static_cast<std::int64_t>(n_test_weeks) * TimeSlot::kPerWeek;
  const std::int64_t available = std::max<std::int64_t>(0, last - train_end);
  if (available < required) {
    throw DataError("split: " + std::to_string(n_test_weeks) + " test week(s) need " +
                    std::to_string(required) + " slots after the training end, only " +
                    std::to_string(available) + " available");
  }

  DatasetSplit split;
  split.train_end = train_end;
  split.tests.resize(n_test_weeks);
  const TimeSlot far_past{std::numeric_limits<std::int64_t>::min() / 2};
  for (const auto& s : series) {
    clip_into(s, far_past, train_end, split.train);
    for (int k = 0; k < n_test_weeks; ++k) {
      clip_into(s, train_end + k * TimeSlot::kPerWeek, train_end + (k + 1) * TimeSlot::kPerWeek,
                split.tests[k]);
    }
  }
  return split;
}

std::int64_t window_count(std::int64_t length, int input_len, int output_len, int stride) {
  const std::int64_t span = static_cast<std::int64_t>(input_len) + output_len;
  if (length < span) return 0;
  return (length - span) / stride + 1;
}

std::vector<Window> make_windows(const StationSeries& series, int input_len, int output_len,
                                 int stride) {
  if (input_len < 1 || output_len < 1 || stride < 1) {
    throw DataError("make_windows: input_len, output_len and stride must be >= 1");
  }
  const std::int64_t n = window_count(series.size(), input_len, output_len, stride);
  std::vector<Window> windows;
  windows.reserve(n);
  for (std::int64_t k = 0; k < n; ++k) {
    const std::int64_t off = k * stride;
    const auto first = series.occupancy.begin() + off;
    Window w;
    w.station_id = series.station_id;
    w.input_start = series.start + off;
    w.input_occ.assign(first, first + input_len);
    w.target_occ.assign(first + input_len, first + input_len + output_len);
    windows.push_back(std::move(w));
  }
  return windows;
}

std::vector<Window> make_windows(std::span<const StationSeries> series, int input_len,
                                 int output_len, int stride) {
  std::vector<Window> all;
  for (const auto& s : series) {
    auto w = make_windows(s, input_len, output_len, stride);
    all.insert(all.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return all;
}

}  // namespace dfds::data
