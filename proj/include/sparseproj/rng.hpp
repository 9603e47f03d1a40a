#pragma once

#include <cmath>
#include <cstdint>
#include <Eigen/Core>

namespace sparseproj {

inline constexpr double kPi = 3.14159265358979323846;

// Bijective 64-bit finalizer used to build counter-based random streams.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Counter-based random stream keyed by (seed, stream). Output i depends only
// on (seed, stream, i), so independent streams can be consumed in any order,
// or in parallel, and still reproduce bit-identically for a fixed seed.
//
// Convention used across the library:
//   - posterior draw i reads from stream i (0 <= i < n_draws),
//   - every other consumer (fold shuffles, data generation, ...) uses a
//     stream with the top bit set, so it can never collide with a draw index.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix64(seed) ^ mix64(stream ^ 0x5851F42D4C957F2Dull)) {}

  std::uint64_t next_u64() {
    return mix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ull);
  }

  // Uniform on (0, 1]; never returns 0 so log() is safe.
  double next_uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the spare variate is cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * kPi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd gaussian_vector(Eigen::Index n) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = next_gaussian();
    return z;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream tags for non-draw consumers (top bit set, see CounterRng).
namespace rng_stream {
inline constexpr std::uint64_t kFoldShuffle = 0x8000000000000001ull;
inline constexpr std::uint64_t kDesign = 0x8000000000000002ull;
inline constexpr std::uint64_t kNoise = 0x8000000000000003ull;
inline constexpr std::uint64_t kCoef = 0x8000000000000004ull;
inline constexpr std::uint64_t kGeneric = 0x8000000000000005ull;
inline constexpr std::uint64_t kSizes = 0x8000000000000006ull;
}  // namespace rng_stream

// Derives an independent per-replicate seed from a master seed.
inline std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t replicate) {
  return mix64(mix64(master) + 0xA24BAED4963EE407ull * (replicate + 1));
}

}  // namespace sparseproj
