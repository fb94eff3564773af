#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace rbergomi::numerics {

/// Philox4x32-10 block cipher. Stateless: output is a
/// pure function of (key, counter).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
  constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    key[0] += w0;
    key[1] += w1;
  }
  return ctr;
}

/// Purpose tag folded into the counter so that independent consumers of the
/// same seed never share draws.
enum class StreamDomain : std::uint32_t { Path = 0, Init = 1, Reference = 2 };

/// A reproducible stream of standard normals identified by
/// (seed, path, step, domain). Draw k of a stream does not depend on how
/// many other streams were consumed or in which order.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint32_t path = 0;
  std::uint32_t step = 0;
  StreamDomain domain = StreamDomain::Path;

  /// Two independent normals for block index `block` (draws 2*block, 2*block+1).
  std::array<double, 2> normal_pair(std::uint32_t block) const {
    const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed),
                                           static_cast<std::uint32_t>(seed >> 32)};
    const auto r = philox4x32({path, step, block, static_cast<std::uint32_t>(domain)}, key);
    const std::uint64_t a = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
    const std::uint64_t b = (static_cast<std::uint64_t>(r[2]) << 32) | r[3];
    // (0, 1] and [0, 1) with 53 random bits.
    const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  double normal(std::uint32_t k) const { return normal_pair(k / 2)[k % 2]; }

  /// Uniform on [0, 1) for draw k.
  double uniform(std::uint32_t k) const {
    const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed),
                                           static_cast<std::uint32_t>(seed >> 32)};
    const auto r = philox4x32({path, step, k, static_cast<std::uint32_t>(domain) | 0x80000000u}, key);
    const std::uint64_t a = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
    return static_cast<double>(a >> 11) * 0x1.0p-53;
  }

  void fill_normals(double* out, std::size_t count) const {
    std::size_t k = 0;
    for (std::uint32_t block = 0; k < count; ++block) {
      const auto z = normal_pair(block);
      out[k++] = z[0];
      if (k < count) out[k++] = z[1];
    }
  }
};

inline std::vector<double> normals(const RngStream& stream, std::size_t count) {
  std::vector<double> out(count);
  stream.fill_normals(out.data(), count);
  return out;
}

/// Derives a child seed, e.g. one per training iteration.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace rbergomi::numerics
