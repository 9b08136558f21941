#include "dfds/checkpoint.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace dfds::checkpoint {

namespace {

constexpr std::string_view kMagic = "dfds-checkpoint 1";

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double(const std::string& text, const std::string& what) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || errno == ERANGE) {
    throw DataError("checkpoint: malformed number '" + text + "' in " + what);
  }
  return v;
}

void check_name(const std::string& s, std::string_view what) {
  if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos) {
    throw DataError("checkpoint: " + std::string(what) + " '" + s +
                    "' must be non-empty without whitespace");
  }
}

}  // namespace

bool Checkpoint::has_block(std::string_view name) const {
  for (const auto& [n, m] : blocks) {
    if (n == name) return true;
  }
  return false;
}

const Matrix& Checkpoint::block(std::string_view name) const {
  for (const auto& [n, m] : blocks) {
    if (n == name) return m;
  }
  throw DataError("checkpoint: missing block '" + std::string(name) + "'");
}

void Checkpoint::add_block(std::string name, Matrix value) {
  check_name(name, "block name");
  if (has_block(name)) throw DataError("checkpoint: duplicate block '" + name + "'");
  blocks.emplace_back(std::move(name), std::move(value));
}

const std::string& Checkpoint::get(const std::string& key) const {
  const auto it = config.find(key);
  if (it == config.end()) throw DataError("checkpoint: missing config key '" + key + "'");
  return it->second;
}

int Checkpoint::get_int(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t used = 0;
  int out = 0;
  try {
    out = std::stoi(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw DataError("checkpoint: config '" + key + "' is not an integer: '" + v + "'");
  }
  return out;
}

double Checkpoint::get_double(const std::string& key) const {
  return parse_double(get(key), "config '" + key + "'");
}

bool Checkpoint::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw DataError("checkpoint: config '" + key + "' is not a boolean: '" + v + "'");
}

void Checkpoint::write(std::ostream& out) const {
  check_name(model, "model name");
  out << kMagic << '\n' << "model " << model << '\n';
  for (const auto& [k, v] : config) {
    check_name(k, "config key");
    check_name(v, "config value");
    out << "config " << k << ' ' << v << '\n';
  }
  for (const auto& [name, m] : blocks) {
    out << "block " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) {
        if (c > 0) out << ' ';
        out << hexfloat(m(r, c));
      }
      out << '\n';
    }
  }
}

Checkpoint Checkpoint::read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw DataError("checkpoint: missing '" + std::string(kMagic) + "' header");
  }
  Checkpoint ck;
  std::string word;
  while (in >> word) {
    if (word == "model") {
      in >> ck.model;
    } else if (word == "config") {
      std::string k, v;
      if (!(in >> k >> v)) throw DataError("checkpoint: truncated config line");
      ck.config[k] = v;
    } else if (word == "block") {
      std::string name;
      Index rows = 0, cols = 0;
      if (!(in >> name >> rows >> cols) || rows < 0 || cols < 0) {
        throw DataError("checkpoint: malformed block header");
      }
      Matrix m(rows, cols);
      std::string token;
      for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
          if (!(in >> token)) throw DataError("checkpoint: block '" + name + "' is truncated");
          m(r, c) = parse_double(token, "block '" + name + "'");
        }
      }
      ck.add_block(std::move(name), std::move(m));
    } else {
      throw DataError("checkpoint: unexpected token '" + word + "'");
    }
  }
  if (ck.model.empty()) throw DataError("checkpoint: no model name");
  return ck;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  write(out);
  if (!out) throw DataError("write failed for checkpoint '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  return read(in);
}

namespace {

Matrix profile_block(const features::StaticProfile& p) {
  Matrix m(4, p.bucket_count());
  for (int k = 0; k < p.bucket_count(); ++k) {
    m(0, k) = p.mean_occ[k];
    m(1, k) = p.q25_occ[k];
    m(2, k) = p.q75_occ[k];
    m(3, k) = static_cast<double>(p.sample_count[k]);
  }
  return m;
}

features::StaticProfile profile_from_block(const std::string& id, const Matrix& m,
                                           bool weekday_conditioned) {
  const Index expected = weekday_conditioned ? 672 : 96;
  if (m.rows() != 4 || m.cols() != expected) {
    throw DataError("checkpoint: profile '" + id + "' has shape " + shape_string(m) +
                    ", expected 4x" + std::to_string(expected));
  }
  features::StaticProfile p;
  p.station_id = id;
  p.weekday_conditioned = weekday_conditioned;
  for (Index k = 0; k < m.cols(); ++k) {
    p.mean_occ.push_back(m(0, k));
    p.q25_occ.push_back(m(1, k));
    p.q75_occ.push_back(m(2, k));
    p.sample_count.push_back(static_cast<std::int64_t>(m(3, k)));
  }
  return p;
}

constexpr std::string_view kProfilePrefix = "profile/";

}  // namespace

void store_profiles(Checkpoint& ck, const features::ProfileSet& profiles) {
  ck.config["profile_weekday_conditioned"] = profiles.global.weekday_conditioned ? "1" : "0";
  ck.add_block(std::string(kProfilePrefix) + features::kGlobalProfileId,
               profile_block(profiles.global));
  for (const auto& [id, p] : profiles.stations) {
    ck.add_block(std::string(kProfilePrefix) + id, profile_block(p));
  }
}

features::ProfileSet load_profiles(const Checkpoint& ck) {
  const bool conditioned = ck.get_bool("profile_weekday_conditioned");
  features::ProfileSet set;
  bool have_global = false;
  for (const auto& [name, m] : ck.blocks) {
    if (!name.starts_with(kProfilePrefix)) continue;
    const std::string id = name.substr(kProfilePrefix.size());
    if (id == features::kGlobalProfileId) {
      set.global = profile_from_block(id, m, conditioned);
      have_global = true;
    } else {
      set.stations[id] = profile_from_block(id, m, conditioned);
    }
  }
  if (!have_global) throw DataError("checkpoint: no global profile");
  return set;
}

}  // namespace dfds::checkpoint
