#pragma once

#include <array>
#include <cstdint>

namespace ratfm {

/// Philox4x32-10 block function (Salmon et al., Random123). Counter-based: every output
/// is a pure function of (key, counter), which makes streams reproducible across
/// languages and independent of evaluation order.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

/// Sequential generator over one Philox stream.
///
/// Stream layout: key = (seed low word, seed high word); counter = (block low word,
/// block high word, stream low word, stream high word). Each block yields four 32-bit
/// words consumed in order. A uniform double uses two consecutive words (w0, w1) as
/// ((w0 << 32 | w1) >> 11) * 2^-53, giving values in [0, 1).
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint32_t next_u32();
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller, consuming two uniforms.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
};

/// Combines identifiers into a stream id (splitmix64 finalizer over a running hash).
std::uint64_t stream_id(std::initializer_list<std::uint64_t> parts);

}  // namespace ratfm
