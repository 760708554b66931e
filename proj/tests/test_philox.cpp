#include <gtest/gtest.h>

#include <set>

#include "scelab/philox.hpp"

using namespace scelab::philox;

// Known-answer vectors of the reference Random123 distribution (kat_vectors,
// philox4x32 with 10 rounds).
TEST(Philox, KnownAnswerZero) {
  const Counter out = philox4x32_10({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out, (Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerAllOnes) {
  const Counter out = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                    {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out, (Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi) {
  const Counter out = philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                    {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out, (Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, IsConstexpr) {
  constexpr Counter out = philox4x32_10({0, 0, 0, 0}, {0, 0});
  static_assert(out[0] == 0x6627e8d5u);
  SUCCEED();
}

TEST(Philox, UnitIntervalEndpoints) {
  EXPECT_EQ(to_unit_open_closed(0, 0), 0x1.0p-53);
  EXPECT_EQ(to_unit_open_closed(0xffffffffu, 0xffffffffu), 1.0);
}

TEST(Philox, DistinctCountersGiveDistinctBlocks) {
  std::set<Counter> seen;
  for (std::uint32_t i = 0; i < 1000; ++i) seen.insert(philox4x32_10({i, 0, 0, 0}, {7, 0}));
  EXPECT_EQ(seen.size(), 1000u);
}
