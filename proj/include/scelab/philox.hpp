#pragma once

// Philox4x32-10 counter-based generator (Salmon, Moraes, Dror, Shaw 2011).
// Stateless: the output block is a pure function of (counter, key).

#include <array>
#include <cstdint>

namespace scelab::philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

namespace detail {

inline constexpr std::uint32_t kMul0 = 0xD2511F53u;
inline constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

constexpr void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                       std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

constexpr Counter round(const Counter& c, const Key& k) {
  std::uint32_t hi0 = 0, lo0 = 0, hi1 = 0, lo1 = 0;
  mulhilo(kMul0, c[0], hi0, lo0);
  mulhilo(kMul1, c[2], hi1, lo1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace detail

constexpr Counter philox4x32_10(Counter ctr, Key key) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += detail::kWeyl0;
      key[1] += detail::kWeyl1;
    }
    ctr = detail::round(ctr, key);
  }
  return ctr;
}

/// Uniform on (0, 1] from the top 53 bits of a 64-bit word.
constexpr double to_unit_open_closed(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t word = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return static_cast<double>((word >> 11) + 1) * 0x1.0p-53;
}

}  // namespace scelab::philox
