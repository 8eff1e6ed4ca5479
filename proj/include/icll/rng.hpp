#pragma once

#include "icll/common.hpp"

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <utility>
#include <vector>

namespace icll {

/// Splittable counter-based PRNG (splitmix64 core). Streams are derived by
/// hashing a seed with a list of stream keys, so episode generation is
/// reproducible and independent of iteration order.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix(seed ^ 0x8af3'9c1d'2e4b'5a67ull)) {}

  static Rng derive(uint64_t seed, std::initializer_list<uint64_t> keys) {
    uint64_t h = mix(seed ^ 0x8af3'9c1d'2e4b'5a67ull);
    for (uint64_t k : keys) h = mix(h ^ mix(k));
    Rng r(0);
    r.state_ = h;
    r.has_spare_ = false;
    return r;
  }

  Rng split(uint64_t key) { return derive(next_u64(), {key}); }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Inclusive integer range.
  long uniform_int(long lo, long hi) {
    return lo + long(next_u64() % uint64_t(hi - lo + 1));
  }

  /// Standard normal via Box-Muller with a cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u = 1.0 - uniform();  // avoid log(0)
    const double r = std::sqrt(-2.0 * std::log(u));
    const double t = 2.0 * M_PI * uniform();
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  Vec normal_vec(Index n) {
    Vec v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Mat normal_mat(Index rows, Index cols) {
    Mat m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = normal();
    return m;
  }

  Vec uniform_vec(Index n, double lo, double hi) {
    Vec v(n);
    for (Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }

  /// Draw from unnormalized nonnegative weights.
  long categorical(const Vec& weights) {
    const double total = weights.sum();
    double u = uniform() * total;
    for (Index i = 0; i < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0) return i;
    }
    return weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = size_t(next_u64() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint64_t mix(uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace icll
