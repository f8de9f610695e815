#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace saad {

/// Seeded generator with platform-independent distributions.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The std:: distributions are not, so integer and real draws are
/// derived from raw engine output here.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on the closed range [lo, hi].
  int64_t uniform_int(int64_t lo, int64_t hi);
  /// Standard normal via Box-Muller.
  double normal();

  std::string serialize() const;
  static Rng deserialize(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent sub-seed; stable under reordering of indices.
uint64_t derive_seed(uint64_t seed, uint64_t index);
uint64_t derive_seed(uint64_t seed, uint64_t stream, uint64_t index);

}  // namespace saad
