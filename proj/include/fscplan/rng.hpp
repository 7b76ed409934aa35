#pragma once

#include <cmath>
#include <cstdint>

namespace fscplan {

// Counter-based splittable generator (SplitMix64 finalizer over a keyed
// counter). Streams derived from the same master seed are independent of the
// order in which they are consumed, which keeps batched simulation
// reproducible regardless of lane scheduling.
class SplitRng {
 public:
  SplitRng() : SplitRng(0) {}
  explicit SplitRng(std::uint64_t seed) : key_(mix(seed ^ kPhi)), counter_(0) {}

  // Independent stream; deriving is pure (does not advance this stream).
  SplitRng derive(std::uint64_t stream) const {
    SplitRng r;
    r.key_ = mix(key_ ^ mix(stream + kPhi));
    r.counter_ = 0;
    return r;
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kPhi); }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe under log().
  double next_double_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  int next_int(int n) {
    return static_cast<int>(next_double() * static_cast<double>(n));
  }

  double next_gaussian() {
    double u1 = next_double_pos();
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925287 * u2);
  }

  // Standard Gumbel, -log(-log(U)).
  double next_gumbel() { return -std::log(-std::log(next_double_pos())); }

  // Inverse-CDF sample from an unnormalized nonnegative weight vector.
  template <typename Weights>
  int sample_index(const Weights& w, int n) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += w[i];
    double u = next_double() * total;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += w[i];
      if (u < acc) return i;
    }
    return n - 1;
  }

 private:
  static constexpr std::uint64_t kPhi = 0x9E3779B97F4A7C15ull;

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace fscplan
