#pragma once

#include <cstdint>

namespace ssg {

// Deterministic xoshiro256++ generator seeded through splitmix64.
// Every consumer derives its own stream from (master seed, stream, substream)
// so the draw order of one component never perturbs another. This is what
// makes checkpoint-resume bit-identical to an uninterrupted run: each scale
// re-derives its stream from scratch.
class Rng {
public:
  explicit Rng(uint64_t seed);

  // Independent stream keyed by purpose (`stream`) and index (`substream`).
  static Rng derive(uint64_t master, uint64_t stream, uint64_t substream = 0);

  uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  // Standard normal via Box-Muller; draws are consumed in pairs.
  double normal();

  void fill_normal(float* dst, int64_t n, float stddev);
  void fill_uniform(float* dst, int64_t n, float lo, float hi);

private:
  uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ssg
