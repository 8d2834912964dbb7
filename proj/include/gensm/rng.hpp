#pragma once

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace gensm {

/// Seeded pseudo-random source: a 64-bit Mersenne Twister (std::mt19937_64)
/// with hand-written uniform/normal transforms so that every draw is
/// bit-identical across standard library implementations.
///
/// Independent substreams are derived by hashing (master seed, path...) through
/// std::seed_seq, whose algorithm is fixed by the standard. Experiments use the
/// path to name a purpose and an index, e.g. {kChannelStream, k}.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  static Rng substream(std::uint64_t master, std::initializer_list<std::uint64_t> path);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller.
  double normal();

  /// Circularly symmetric complex Gaussian with E|z|^2 = 1.
  std::complex<double> complex_normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gensm
