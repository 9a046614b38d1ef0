#pragma once

// Portable seeded randomness. The engine is std::mt19937_64, whose output
// sequence is fixed by the C++ standard; the distributions below are written
// out here because the standard library ones are implementation-defined.

#include <complex>
#include <cstdint>
#include <random>

namespace ilcdpd {

/// SplitMix64 finalizer applied to (base, stream). Used to derive independent
/// sub-seeds, e.g. one per PAPR rejection attempt or per plant call.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Index uniform in [0, n).
  std::size_t index(std::size_t n);
  /// Standard normal via Box-Muller.
  double normal();
  /// Circular complex Gaussian with E|z|^2 = 1.
  std::complex<double> complex_normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace ilcdpd
