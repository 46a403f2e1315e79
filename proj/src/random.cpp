#include "fkstab/random.hpp"

#include <cmath>

namespace fkstab {

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
    : seed_(seed), stream_id_(stream_id), key_(mix64(mix64(seed) ^ (stream_id * kGamma + 0x632be59bd9b4e019ULL))) {}

RandomStream RandomStream::substream(std::uint64_t step, std::uint64_t index,
                                     DrawPurpose purpose) const noexcept {
  std::uint64_t k = mix64(key_ ^ mix64(static_cast<std::uint64_t>(purpose) * 0xd1b54a32d192ed03ULL));
  k = mix64(k ^ mix64(step + 0x8cb92ba72f3d8dd7ULL));
  k = mix64(k ^ mix64(index ^ 0xa0761d6478bd642fULL));
  return RandomStream(seed_, stream_id_, k);
}

// Marsaglia polar method without the cached second variate, so every
// normal draw consumes a deterministic function of the stream.
double standard_normal(RandomStream& rng) {
  for (;;) {
    const double u = 2.0 * rng.uniform() - 1.0;
    const double v = 2.0 * rng.uniform() - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

double standard_exponential(RandomStream& rng) { return -std::log(rng.uniform()); }

}  // namespace fkstab
