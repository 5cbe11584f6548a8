#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "delsim/canonical.hpp"

namespace delsim {

// Deterministic random source. mt19937_64 output is fixed by the standard;
// the uniform mappings below avoid the implementation-defined distribution
// classes so runs are digest-stable across platforms.
class DetRng {
 public:
  explicit DetRng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform in [0, n). n must be > 0. Modulo bias is irrelevant here; only
  // determinism matters.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  bool coin(double p) { return uniform01() < p; }

  // Child seed derived from the parent seed plus a label, so independent
  // streams never share state.
  static std::uint64_t derive(std::uint64_t seed, std::string_view label) {
    CanonicalWriter w;
    w.u64(seed).str(label);
    Digest32 d = w.digest();
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out = (out << 8) | d[static_cast<size_t>(i)];
    return out;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace delsim
