#pragma once

#include <cstdint>

namespace strata {

// Counter-based generator: every variate is a pure function of
// (key, stream, counter), so per-subject / per-replicate substreams are
// independent of thread count and evaluation order.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t hash_mix(uint64_t key, uint64_t stream, uint64_t ctr) {
  uint64_t h = splitmix64(key);
  h = splitmix64(h ^ stream);
  h = splitmix64(h ^ ctr);
  return h;
}

// uniform on (0,1), never exactly 0 or 1
inline double u64_to_unit(uint64_t h) {
  return (static_cast<double>(h >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

inline double uniform_at(uint64_t key, uint64_t stream, uint64_t ctr) {
  return u64_to_unit(hash_mix(key, stream, ctr));
}

double inv_normal_cdf(double p);  // Wichura AS241

inline double normal_at(uint64_t key, uint64_t stream, uint64_t ctr) {
  return inv_normal_cdf(uniform_at(key, stream, ctr));
}

class Rng {
 public:
  explicit Rng(uint64_t key, uint64_t stream = 0) : key_(key), stream_(stream) {}

  // independent substream; tags compose via hashing
  Rng fork(uint64_t tag) const { return Rng(key_, splitmix64(stream_ ^ splitmix64(tag))); }

  uint64_t next_u64() { return hash_mix(key_, stream_, ctr_++); }
  double uniform() { return u64_to_unit(next_u64()); }
  double normal() { return inv_normal_cdf(uniform()); }
  bool bernoulli(double p) { return uniform() < p; }

  // unbiased integer in [0, n)
  uint64_t below(uint64_t n) {
    uint64_t lim = ~uint64_t{0} - (~uint64_t{0} % n);
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= lim);
    return v % n;
  }

  uint64_t key() const { return key_; }
  uint64_t stream() const { return stream_; }

 private:
  uint64_t key_;
  uint64_t stream_;
  uint64_t ctr_ = 0;
};

}  // namespace strata
