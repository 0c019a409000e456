#include "ssg/rng.hpp"

#include <cmath>

namespace ssg {
namespace {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(uint64_t seed) {
  uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
  // xoshiro must not start from the all-zero state.
  if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 0x9e3779b97f4a7c15ull;
}

Rng Rng::derive(uint64_t master, uint64_t stream, uint64_t substream) {
  uint64_t x = master;
  uint64_t a = splitmix64(x);
  x ^= stream * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull;
  uint64_t b = splitmix64(x);
  x ^= substream * 0x9e6c63d0876a9a47ull + 1;
  uint64_t c = splitmix64(x);
  return Rng(a ^ rotl(b, 17) ^ rotl(c, 37));
}

uint64_t Rng::next_u64() {
  uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] so the log is finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 6.283185307179586476925287 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

void Rng::fill_normal(float* dst, int64_t n, float stddev) {
  for (int64_t i = 0; i < n; ++i) dst[i] = float(normal()) * stddev;
}

void Rng::fill_uniform(float* dst, int64_t n, float lo, float hi) {
  for (int64_t i = 0; i < n; ++i) dst[i] = lo + float(uniform()) * (hi - lo);
}

}  // namespace ssg
