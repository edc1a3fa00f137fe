#pragma once

#include <cstdint>
#include <cmath>

namespace insgen {

// Counter-based random stream. Every draw is a pure function of
// (seed, stream, counter), so any sub-computation can be replayed exactly
// by re-deriving the same stream, and checkpointing needs no generator state
// beyond the numbers that define the stream.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  // Independent derived stream; does not consume draws from this one.
  RngStream substream(std::uint64_t key) const {
    return RngStream(seed_, mix(stream_ ^ mix(key ^ 0x9e3779b97f4a7c15ull)));
  }

  std::uint64_t next_u64() { return mix(mix(mix(seed_) ^ stream_) ^ counter_++); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes two counters per call.
  double normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace insgen
