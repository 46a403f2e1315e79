#pragma once

#include <cstdint>

namespace fkstab {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum class DrawPurpose : std::uint64_t { init = 1, resample = 2, mutate = 3, simulate = 4, model = 5 };

/// Counter-based random stream (SplitMix64 over a keyed Weyl sequence).
///
/// Draw k of a stream is a pure function of (seed, stream_id, k), so a
/// stream replays bit-identically and streams with distinct ids are
/// independent for practical purposes. Satisfies UniformRandomBitGenerator,
/// so it plugs into the <random> distributions.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed, std::uint64_t stream_id = 0) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGamma);
  }

  /// Uniform on the open interval (0, 1) with 53 bits of resolution.
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Independent child stream keyed by (step, index, purpose); the
  /// parent's position does not matter.
  RandomStream substream(std::uint64_t step, std::uint64_t index,
                         DrawPurpose purpose) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  RandomStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t key) noexcept
      : seed_(seed), stream_id_(stream_id), key_(key) {}

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

double standard_normal(RandomStream& rng);
double standard_exponential(RandomStream& rng);

}  // namespace fkstab
