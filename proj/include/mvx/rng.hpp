#pragma once

#include "mvx/common.hpp"

#include <array>
#include <cstdint>

namespace mvx {

// Counter-based random streams. Every draw is a pure function of
// (seed, particle, step, tag, draw-index), so particle updates can run on any
// thread schedule and still reproduce bit-identical trajectories, and paired
// simulations can replay exactly the same Brownian increments by reusing a tag.

/// Stream purpose tags. Distinct tags give statistically independent streams
/// for the same (seed, particle, step).
enum class StreamTag : std::uint32_t {
  Brownian = 0,   // diffusion increments (shared between coupled pairs)
  Regime = 1,     // regime-chain proposals, first chain
  RegimeB = 2,    // regime-chain proposals, second chain of a pair
  Init = 3,       // initial-condition sampling, first ensemble
  InitB = 4,      // initial-condition sampling, second ensemble
  BrownianB = 5,  // independent diffusion noise for a second ensemble
  Subsample = 6,  // measure subsampling
};

/// Philox4x32-10 block cipher (Salmon et al. counter-based generator).
/// Returns four 32-bit words for a 128-bit counter and 64-bit key.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::uint64_t key) {
  std::uint32_t k0 = static_cast<std::uint32_t>(key);
  std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k0,
           static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k1,
           static_cast<std::uint32_t>(p0)};
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  return ctr;
}

/// One logical random stream, addressed by (seed, particle, step, tag).
/// Draws advance an internal counter; a fresh RngStream with the same
/// coordinates replays the same sequence.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint32_t particle, std::uint32_t step,
            StreamTag tag)
      : seed_(seed), particle_(particle), step_(step),
        tag_(static_cast<std::uint32_t>(tag)) {}

  /// Uniform draw in the open interval (0,1).
  double uniform() {
    if (!have_spare_) {
      const auto w = philox4x32({particle_, step_, tag_, draw_++}, seed_);
      spare_ = to_unit(w[2], w[3]);
      have_spare_ = true;
      return to_unit(w[0], w[1]);
    }
    have_spare_ = false;
    return spare_;
  }

  /// Standard normal draw (Box-Muller, cosine branch).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Vector of iid standard normals.
  Vec normal_vec(int n) {
    Vec z(n);
    for (int i = 0; i < n; ++i) z[i] = normal();
    return z;
  }

  /// Poisson draw by Knuth's product method; intended for the small means
  /// that arise as (dominating rate) * dt.
  int poisson(double mean) {
    if (mean < 0.0) throw SimError("poisson: negative mean");
    if (mean == 0.0) return 0;
    if (mean > 50.0)
      throw SimError("poisson: mean " + std::to_string(mean) +
                     " too large for the per-step sampler; reduce dt");
    const double limit = std::exp(-mean);
    int k = 0;
    double prod = 1.0;
    for (;;) {
      prod *= uniform();
      if (prod <= limit) return k;
      ++k;
    }
  }

  /// Uniform integer in [0, n).
  std::uint32_t uniform_index(std::uint32_t n) {
    return std::min(n - 1, static_cast<std::uint32_t>(uniform() * n));
  }

 private:
  static double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (std::uint64_t{hi} << 32) | lo;
    // 53 bits, offset by half an ulp so the result is never exactly 0 or 1.
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t seed_;
  std::uint32_t particle_, step_, tag_;
  std::uint32_t draw_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace mvx
