#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dfds/error.hpp"
#include "dfds/features.hpp"
#include "dfds/numerics.hpp"

namespace dfds::checkpoint {

/// Text container for a fitted model:
///
///   dfds-checkpoint 1
///   model <name>
///   config <key> <value>        (any number, sorted by key)
///   block <name> <rows> <cols>  (followed by rows*cols hexfloat values, row-major)
///
/// Values are written with %a, so a save/load cycle is bit-exact.
struct Checkpoint {
  std::string model;
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Matrix>> blocks;

  bool has_block(std::string_view name) const;
  /// Throws DataError when absent.
  const Matrix& block(std::string_view name) const;
  void add_block(std::string name, Matrix value);

  /// Throws DataError when the key is absent or malformed.
  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  void write(std::ostream& out) const;
  static Checkpoint read(std::istream& in);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

/// Appends every block of `params` in visiting order.
template <typename Params>
void store_params(Checkpoint& ck, Params& params, std::string_view prefix) {
  params.visit_blocks([&](const std::string& name, auto& m) {
    ck.add_block(std::string(prefix) + name, m.template cast<double>());
  });
}

/// Fills `params` (already shaped) from blocks written by store_params.
template <typename Params>
void load_params(const Checkpoint& ck, Params& params, std::string_view prefix) {
  params.visit_blocks([&](const std::string& name, auto& m) {
    const Matrix& src = ck.block(std::string(prefix) + name);
    if (src.rows() != m.rows() || src.cols() != m.cols()) {
      throw DataError("checkpoint block '" + std::string(prefix) + name + "' has shape " +
                      shape_string(src) + ", model expects " + shape_string(m));
    }
    m = src.template cast<typename Params::Scalar>();
  });
}

/// Profiles as blocks "profile/<station_id>" (4 x buckets: mean, q25, q75, count)
/// plus "profile/__GLOBAL__", with the conditioning flag in the config.
void store_profiles(Checkpoint& ck, const features::ProfileSet& profiles);
features::ProfileSet load_profiles(const Checkpoint& ck);

}  // namespace dfds::checkpoint
