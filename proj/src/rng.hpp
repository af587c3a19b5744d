#pragma once

#include <cstdint>
#include <vector>

namespace bci {

// xoshiro256++ seeded through splitmix64. Distributions are hand-rolled so
// every stream is reproducible across platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller (two uniforms per draw, no cached spare).
  double normal();

  // Uniform integer in [0, n), rejection-sampled to remove modulo bias.
  uint64_t below(uint64_t n);

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent substream: hashes (state seed, stream_id) into a fresh generator.
  Rng stream(uint64_t stream_id) const;

 private:
  uint64_t s_[4];
  uint64_t seed_;
};

}  // namespace bci
