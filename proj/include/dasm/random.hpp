#pragma once

#include <cstdint>
#include <random>

namespace dasm {

/// Reproducible uniform draws: std::mt19937_64 (fully specified by the C++
/// standard) with the top 53 bits of each output mapped to [0, 1). The
/// standard library distributions are implementation defined and are not
/// used so that sequences match across toolchains.
class UniformSampler {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64/53bit-v1";

  explicit UniformSampler(std::uint64_t seed) : engine_(seed) {}

  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  /// Integer in [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(unit() * static_cast<double>(hi - lo + 1));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dasm
