#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rulattack {

/// Derives an independent 64-bit seed for a named stream ("init",
/// "shuffle", ...) from the run seed, so streams never share state.
std::uint64_t stream_seed(std::uint64_t run_seed, std::string_view name);

/// Portable generator: the engine is fully specified by the standard, and
/// the conversions below avoid the implementation-defined distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t run_seed, std::string_view stream)
      : engine_(stream_seed(run_seed, stream)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller; one value per call.
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace rulattack
