#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "mcsplat/types.hpp"

namespace mcsplat {

// One master seed fans out into independent named substreams so that a
// consumer of one stream (e.g. relocation cadence) never perturbs another
// (e.g. position noise). Stream seeds derive from FNV-1a of the name mixed
// with the master seed.
//
// Draw-order conventions, relied on for resume replay:
//   "init"     initialize(): 3 u01 per Gaussian for position (z consumed even
//              in planar mode), then 3 u01 per Gaussian for color, in index
//              order; point-cloud padding draws one uniform_below per pad slot.
//   "noise"    position_noise(): 3 normals (6 raw draws) per stored Gaussian
//              in index order, every call.
//   "relocate" build_plan(): one u01 per dead index in ascending order, plus
//              one u01 per bounded redraw; grow_step(): same per new slot.
//   "views"    trainer: one uniform_below(num_views) per iteration.
class SubStream {
 public:
  explicit SubStream(uint64_t seed) : engine_(seed) {}

  uint64_t u64() { return engine_(); }

  // Uniform in (0, 1]: never zero, safe under log().
  double u01() { return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; }

  // Box-Muller, exactly two raw draws per normal. Stateless by design:
  // std::normal_distribution caches a spare value that would be lost across
  // checkpoint resume.
  double normal() {
    double u1 = u01();
    double u2 = u01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Vec3 normal3() {
    double a = normal(), b = normal(), c = normal();
    return Vec3(a, b, c);
  }

  // Uniform integer in [0, n). Multiply-shift; bias of n/2^64 is negligible.
  uint64_t uniform_below(uint64_t n) {
    MCSPLAT_CHECK(n > 0, "uniform_below: n must be positive");
    return static_cast<uint64_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  std::string serialize_state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void restore_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (is.fail()) throw runtime_failure("SubStream: malformed serialized state");
  }

 private:
  std::mt19937_64 engine_;
};

class RngPool {
 public:
  explicit RngPool(uint64_t master_seed) : master_seed_(master_seed) {}

  SubStream& stream(const std::string& name) {
    auto it = streams_.find(name);
    if (it == streams_.end()) {
      it = streams_.emplace(name, std::make_unique<SubStream>(stream_seed(name))).first;
    }
    return *it->second;
  }

  uint64_t master_seed() const { return master_seed_; }

  // Streams in deterministic (name-sorted) order, for state persistence.
  std::map<std::string, std::string> serialize_states() const {
    std::map<std::string, std::string> out;
    for (const auto& [name, s] : streams_) out[name] = s->serialize_state();
    return out;
  }

  void restore_states(const std::map<std::string, std::string>& states) {
    for (const auto& [name, st] : states) stream(name).restore_state(st);
  }

 private:
  uint64_t stream_seed(const std::string& name) const {
    uint64_t h = 1469598103934665603ull;  // FNV-1a 64
    for (unsigned char c : name) {
      h ^= c;
      h *= 1099511628211ull;
    }
    // splitmix64 finalizer over (master ^ name-hash)
    uint64_t z = master_seed_ ^ h;
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t master_seed_;
  std::map<std::string, std::unique_ptr<SubStream>> streams_;
};

}  // namespace mcsplat
