#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dfds::metrics {

inline constexpr double kDefaultThreshold = 0.5;

struct Confusion {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
  Confusion& operator+=(const Confusion& o);
  bool operator==(const Confusion&) const = default;
};

/// Occupied-class scores. `degenerate` is set when any ratio was 0/0 and
/// reported as 0.
struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;
};

/// Class 1 iff pred >= threshold. Throws DataError on a length mismatch.
Confusion confusion(std::span<const double> preds, std::span<const std::uint8_t> targets,
                    double threshold = kDefaultThreshold);

Prf prf(const Confusion& c);

struct SetMetrics {
  std::string name;
  Prf scores;
  Confusion counts;
};

struct MetricsReport {
  std::vector<SetMetrics> per_test_set;
  Prf macro;  // arithmetic means of the per-set values
};

/// Throws DataError on an empty list.
MetricsReport macro_average(std::vector<SetMetrics> per_set);

/// `test_set,precision,recall,f1,tp,fp,fn,tn` plus a `macro` row with empty counts.
void write_report(std::ostream& out, const MetricsReport& report);
std::string report_csv(const MetricsReport& report);

}  // namespace dfds::metrics
