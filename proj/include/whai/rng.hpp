#pragma once

// Deterministic randomness. One master seed is split into per-subsystem
// streams (init, batching, noise, counts, split), and per-(iteration, doc)
// streams are derived arithmetically so results do not depend on thread
// scheduling. All draws go through Rng's own kernels; no state is hidden in
// standard-library distribution objects, so serializing the engine state is
// enough to resume exactly.

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "whai/common.hpp"

namespace whai {

// splitmix64 step; used only for seed derivation.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  std::uint64_t s = mix_seed(base ^ 0x8f1bbcdcbfa53e0bull);
  s = mix_seed(s ^ a);
  s = mix_seed(s ^ b);
  return mix_seed(s ^ c);
}

// Named subsystem streams split from the master seed.
struct SeedTable {
  std::uint64_t master = 0;
  std::uint64_t init = 0;
  std::uint64_t batching = 0;
  std::uint64_t noise = 0;
  std::uint64_t counts = 0;
  std::uint64_t split = 0;
  std::uint64_t tlasgr = 0;

  static SeedTable from_master(std::uint64_t master) {
    SeedTable t;
    t.master = master;
    t.init = derive_seed(master, 1);
    t.batching = derive_seed(master, 2);
    t.noise = derive_seed(master, 3);
    t.counts = derive_seed(master, 4);
    t.split = derive_seed(master, 5);
    t.tlasgr = derive_seed(master, 6);
    return t;
  }
};

class Rng {
 public:
  Rng() : engine_(0x5deece66dull) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on (0,1); 53-bit mantissa, offset half an ulp so 0 and 1 are
  // unreachable.
  double uniform01() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Index in [0, n).
  std::size_t uniform_index(std::size_t n) {
    require(n > 0, "uniform_index: empty range");
    // Rejection to avoid modulo bias.
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  // One-shot Box-Muller; stateless between calls.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Engine state round-trips through text exactly.
  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }
  static Rng deserialize(const std::string& s) {
    Rng r;
    std::istringstream is(s);
    is >> r.engine_;
    require(!is.fail(), "bad RNG state string");
    return r;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace whai
