#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

#include "dfds/error.hpp"
#include "dfds/features.hpp"
#include "dfds/numerics.hpp"

using namespace dfds;
using namespace dfds::features;
using dfds::data::StationSeries;
using dfds::data::TimeSlot;
using dfds::data::Window;

namespace {

// Monday 2020-08-03 00:00 UTC.
const TimeSlot kMonday = TimeSlot::from_timestamp(1596412800);

StationSeries random_series(const std::string& id, TimeSlot start, std::int64_t len, double p,
                            Rng& rng) {
  StationSeries s{id, start, {}};
  for (std::int64_t k = 0; k < len; ++k) s.occupancy.push_back(rng.uniform() < p ? 1 : 0);
  return s;
}

struct NaiveBucket {
  std::int64_t n = 0, ones = 0;
};

// Per-slot counts by a plain scan, then the statistics from counts alone:
// a sorted binary sample of n values with z zeros has a 1 at rank r iff r > z.
void check_against_recount(const ProfileSet& profiles, const std::vector<StationSeries>& train) {
  std::map<std::string, std::array<NaiveBucket, 96>> counts;
  std::array<NaiveBucket, 96> pooled{};
  for (const auto& s : train) {
    for (std::int64_t k = 0; k < s.size(); ++k) {
      const auto sod = static_cast<std::size_t>((s.start + k).slot_of_day());
      counts[s.station_id][sod].n += 1;
      counts[s.station_id][sod].ones += s.occupancy[k];
      pooled[sod].n += 1;
      pooled[sod].ones += s.occupancy[k];
    }
  }
  const auto check = [](const StaticProfile& p, const std::array<NaiveBucket, 96>& c) {
    std::int64_t all_n = 0, all_ones = 0;
    for (const auto& b : c) {
      all_n += b.n;
      all_ones += b.ones;
    }
    REQUIRE(p.bucket_count() == 96);
    for (int s = 0; s < 96; ++s) {
      const auto& b = c[s];
      CHECK(p.sample_count[s] == b.n);
      if (b.n == 0) {
        const double fallback = static_cast<double>(all_ones) / static_cast<double>(all_n);
        CHECK(p.mean_occ[s] == fallback);
        CHECK(p.q25_occ[s] == fallback);
        CHECK(p.q75_occ[s] == fallback);
        continue;
      }
      const std::int64_t zeros = b.n - b.ones;
      const auto rank = [&](std::int64_t num, std::int64_t den) { return (num * b.n + den - 1) / den; };
      CHECK(p.mean_occ[s] == static_cast<double>(b.ones) / static_cast<double>(b.n));
      CHECK(p.q25_occ[s] == (rank(1, 4) > zeros ? 1.0 : 0.0));
      CHECK(p.q75_occ[s] == (rank(3, 4) > zeros ? 1.0 : 0.0));
    }
  };
  CHECK(profiles.stations.size() == counts.size());
  for (const auto& [id, c] : counts) {
    REQUIRE(profiles.stations.count(id) == 1);
    check(profiles.stations.at(id), c);
  }
  check(profiles.global, pooled);
}

}  // namespace

TEST_CASE("encode_dynamic layout examples") {
  const DynamicFeatures a = encode_dynamic(true, kMonday);
  CHECK(a[0] == 1.0);
  CHECK(a[1] == 1.0);
  CHECK(a[8] == 1.0);
  CHECK(a[32] == 1.0);
  double sum = 0;
  for (double v : a) sum += v;
  CHECK(sum == 4.0);

  const DynamicFeatures b = encode_dynamic(false, kMonday + 6 * 96 + 95);  // Sunday 23:45
  CHECK(b[0] == 0.0);
  CHECK(b[7] == 1.0);
  CHECK(b[31] == 1.0);
  CHECK(b[35] == 1.0);
}

TEST_CASE("encode_dynamic one-hot structure and injectivity over a week") {
  std::set<std::vector<double>> seen;
  for (int occ = 0; occ < 2; ++occ) {
    for (std::int64_t k = 0; k < TimeSlot::kPerWeek; ++k) {
      const TimeSlot slot = kMonday + k;
      const DynamicFeatures f = encode_dynamic(occ == 1, slot);
      const auto block_sum = [&](int lo, int len) {
        double s = 0;
        for (int j = lo; j < lo + len; ++j) {
          CHECK((f[j] == 0.0 || f[j] == 1.0));
          s += f[j];
        }
        return s;
      };
      CHECK(block_sum(1, 7) == 1.0);
      CHECK(block_sum(8, 24) == 1.0);
      CHECK(block_sum(32, 4) == 1.0);
      CHECK(f[0] == occ);
      CHECK(f[1 + slot.weekday()] == 1.0);
      CHECK(f[8 + slot.hour()] == 1.0);
      CHECK(f[32 + slot.quarter()] == 1.0);
      seen.insert(std::vector<double>(f.begin(), f.end()));
    }
  }
  CHECK(seen.size() == static_cast<std::size_t>(2 * TimeSlot::kPerWeek));
}

TEST_CASE("nearest-rank quantile examples") {
  const std::vector<double> v{0, 0, 0, 1};
  CHECK(nearest_rank_quantile(v, 0.75) == 0.0);
  CHECK(nearest_rank_quantile(v, 1.0) == 1.0);
  CHECK(nearest_rank_quantile(std::vector<double>{0, 1}, 0.25) == 0.0);
  CHECK_THROWS_AS(nearest_rank_quantile(std::vector<double>{}, 0.5), DataError);
  CHECK_THROWS_AS(nearest_rank_quantile(v, 0.0), DataError);

  // rank ceil(q n) against integer arithmetic on random sorted samples
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(200));
    std::vector<double> s(n);
    for (int k = 0; k < n; ++k) s[k] = k;
    const int num = 1 + static_cast<int>(rng.below(20));
    const double q = num / 20.0;
    const int rank = (num * n + 19) / 20;
    CHECK(nearest_rank_quantile(s, q) == s[rank - 1]);
  }
}

TEST_CASE("profile construction examples") {
  // occupied every day at 09:00 only
  StationSeries nine{"a", kMonday, std::vector<std::uint8_t>(14 * 96, 0)};
  for (int d = 0; d < 14; ++d) nine.occupancy[d * 96 + 36] = 1;
  const ProfileSet p = build_static_profiles(std::vector<StationSeries>{nine});
  CHECK(p.lookup("a").mean_occ[36] == 1.0);
  CHECK(p.lookup("a").mean_occ[0] == 0.0);

  // 105 days, 25 of them occupied at slot 10
  StationSeries many{"b", kMonday, std::vector<std::uint8_t>(105 * 96, 0)};
  for (int d = 0; d < 25; ++d) many.occupancy[d * 96 + 10] = 1;
  const auto& b = build_static_profiles(std::vector<StationSeries>{many}).lookup("b");
  CHECK(b.sample_count[10] == 105);
  CHECK(b.mean_occ[10] == doctest::Approx(0.2381).epsilon(1e-4));
  CHECK(b.q25_occ[10] == 0.0);
  CHECK(b.q75_occ[10] == 0.0);

  // half a day of data: buckets 48..95 are empty and fall back to the station mean
  StationSeries half{"c", kMonday, std::vector<std::uint8_t>(48, 0)};
  for (int k = 0; k < 12; ++k) half.occupancy[k] = 1;
  const auto& c = build_static_profiles(std::vector<StationSeries>{half}).lookup("c");
  CHECK(c.mean_occ[60] == 0.25);
  CHECK(c.q25_occ[60] == 0.25);
  CHECK(c.q75_occ[60] == 0.25);
  CHECK(c.sample_count[60] == 0);

  CHECK_THROWS_AS(build_static_profiles(std::vector<StationSeries>{}), DataError);
}

TEST_CASE("profiles equal a brute-force recount on 2-station 2-week fixtures") {
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<StationSeries> train;
    for (int s = 0; s < 2; ++s) {
      const auto offset = static_cast<std::int64_t>(rng.below(96));
      // split each station's fortnight by a random gap to exercise multiple runs
      const std::int64_t len = 2 * TimeSlot::kPerWeek - offset;
      const std::int64_t cut = 1 + static_cast<std::int64_t>(rng.below(len - 10));
      const double p = rng.uniform(0.0, 0.6);
      const std::string id = "st" + std::to_string(s);
      train.push_back(random_series(id, kMonday + offset, cut, p, rng));
      train.push_back(random_series(id, kMonday + offset + cut + 3, len - cut - 3, p, rng));
    }
    check_against_recount(build_static_profiles(train), train);
  }
}

TEST_CASE("profile invariants") {
  SUBCASE("all-zero data gives zero statistics everywhere") {
    const std::vector<StationSeries> zero{{"z", kMonday, std::vector<std::uint8_t>(3 * 96 + 5, 0)}};
    const ProfileSet p = build_static_profiles(zero);
    for (const auto* prof : {&p.lookup("z"), &p.global}) {
      for (int s = 0; s < 96; ++s) {
        CHECK(prof->mean_occ[s] == 0.0);
        CHECK(prof->q25_occ[s] == 0.0);
        CHECK(prof->q75_occ[s] == 0.0);
      }
    }
  }

  SUBCASE("quantiles are ordered and bounded") {
    Rng rng(5);
    std::vector<StationSeries> train;
    for (int s = 0; s < 4; ++s) train.push_back(random_series("s" + std::to_string(s), kMonday, 900, 0.3, rng));
    const ProfileSet p = build_static_profiles(train);
    for (const auto& [id, prof] : p.stations) {
      for (int s = 0; s < 96; ++s) {
        CHECK(prof.q25_occ[s] <= prof.q75_occ[s]);
        CHECK(prof.mean_occ[s] >= 0.0);
        CHECK(prof.mean_occ[s] <= 1.0);
      }
    }
  }

  SUBCASE("profiles depend on training data only") {
    Rng rng(6);
    const std::vector<StationSeries> train{random_series("a", kMonday, 2000, 0.2, rng)};
    std::vector<StationSeries> test{random_series("a", kMonday + 2000, 672, 0.2, rng)};
    std::ostringstream before, after;
    write_profiles(before, build_static_profiles(train));
    for (auto& b : test[0].occupancy) b = 1 - b;
    write_profiles(after, build_static_profiles(train));
    CHECK(before.str() == after.str());
  }
}

TEST_CASE("weekday-conditioned profiles use 672 buckets") {
  Rng rng(12);
  const std::vector<StationSeries> train{random_series("a", kMonday, 3 * TimeSlot::kPerWeek, 0.3, rng)};
  const ProfileSet p = build_static_profiles(train, {.weekday_conditioned = true});
  const auto& a = p.lookup("a");
  REQUIRE(a.bucket_count() == 672);
  for (int b = 0; b < 672; ++b) {
    double ones = 0;
    for (int w = 0; w < 3; ++w) ones += train[0].occupancy[w * 672 + b];
    CHECK(a.sample_count[b] == 3);
    CHECK(a.mean_occ[b] == ones / 3.0);
  }
}

TEST_CASE("static rows lookup") {
  StationSeries nine{"a", kMonday, std::vector<std::uint8_t>(7 * 96, 0)};
  for (int d = 0; d < 7; ++d) nine.occupancy[d * 96 + 36] = 1;
  const ProfileSet p = build_static_profiles(std::vector<StationSeries>{nine});

  // targets at 09:00 and 09:15
  Window w{"a", kMonday + 34, {0, 0}, {0, 0}};
  StaticRows rows = static_rows_for_window(p, w);
  CHECK(rows[StaticFeature::mean] == std::vector<double>{1.0, 0.0});
  CHECK(rows[StaticFeature::q75] == std::vector<double>{1.0, 0.0});

  Window unseen{"nowhere", kMonday + 34, {0, 0}, {0, 0}};
  rows = static_rows_for_window(p, unseen);
  CHECK(rows[StaticFeature::mean] == std::vector<double>{p.global.mean_occ[36], p.global.mean_occ[37]});

  ProfileSet constant = p;
  auto& c = constant.stations.at("a");
  std::fill(c.mean_occ.begin(), c.mean_occ.end(), 0.5);
  std::fill(c.q25_occ.begin(), c.q25_occ.end(), 0.5);
  std::fill(c.q75_occ.begin(), c.q75_occ.end(), 0.5);
  Window long_w{"a", kMonday + 90, {0}, std::vector<std::uint8_t>(20, 0)};
  rows = static_rows_for_window(constant, long_w);
  for (const auto& r : rows.rows) CHECK(r == std::vector<double>(20, 0.5));

  // rows[f][t] == profile[f][slot_of_day(target t)] for random windows
  Rng rng(3);
  const std::vector<StationSeries> train{random_series("a", kMonday, 1500, 0.4, rng)};
  const ProfileSet rp = build_static_profiles(train);
  for (int trial = 0; trial < 50; ++trial) {
    Window rw{"a", kMonday + static_cast<std::int64_t>(rng.below(5000)), {0, 1, 0},
              std::vector<std::uint8_t>(1 + rng.below(40), 0)};
    const StaticRows r = static_rows_for_window(rp, rw);
    for (int t = 0; t < rw.output_len(); ++t) {
      const int s = rw.target_slot(t).slot_of_day();
      CHECK(r[StaticFeature::mean][t] == rp.lookup("a").mean_occ[s]);
      CHECK(r[StaticFeature::q25][t] == rp.lookup("a").q25_occ[s]);
      CHECK(r[StaticFeature::q75][t] == rp.lookup("a").q75_occ[s]);
    }
  }
}

TEST_CASE("profile csv round trip is exact") {
  Rng rng(44);
  std::vector<StationSeries> train;
  for (int s = 0; s < 3; ++s) train.push_back(random_series("s" + std::to_string(s), kMonday + s * 7, 1234, 0.25, rng));
  const ProfileSet p = build_static_profiles(train);
  std::stringstream csv;
  write_profiles(csv, p);
  CHECK(csv.str().rfind("station_id,slot_of_day,mean,q25,q75,count\n", 0) == 0);
  const ProfileSet q = read_profiles(csv);
  REQUIRE(q.stations.size() == 3);
  for (const auto& [id, prof] : p.stations) {
    const auto& r = q.stations.at(id);
    CHECK(std::memcmp(prof.mean_occ.data(), r.mean_occ.data(), 96 * sizeof(double)) == 0);
    CHECK(prof.q25_occ == r.q25_occ);
    CHECK(prof.q75_occ == r.q75_occ);
    CHECK(prof.sample_count == r.sample_count);
  }
  CHECK(q.global.mean_occ == p.global.mean_occ);
}
