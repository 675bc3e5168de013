#include <gtest/gtest.h>

#include "diffcap/rng.hpp"

using namespace diffcap;

TEST(Rng, Splitmix64ReferenceValues) {
  // First outputs of the splitmix64 generator seeded with 0 (state advanced by the constant).
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFull);
  EXPECT_EQ(splitmix64(0x9E3779B97F4A7C15ull), 0x6E789E6AA1B965F4ull);
}

TEST(Rng, SameIdentityReplays) {
  NoiseStream a(42, 3, Purpose::kInject, 1), b(42, 3, Purpose::kInject, 1);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.normal(), b.normal());
}

TEST(Rng, DifferentIdentitiesDiffer) {
  NoiseStream a(42, 3, Purpose::kInject), b(42, 4, Purpose::kInject), c(42, 3, Purpose::kReverse),
      d(43, 3, Purpose::kInject);
  const double va = a.normal();
  EXPECT_NE(va, b.normal());
  EXPECT_NE(va, c.normal());
  EXPECT_NE(va, d.normal());
}

TEST(Rng, ChildDoesNotConsumeParent) {
  NoiseStream a(1, 0, Purpose::kData), b(1, 0, Purpose::kData);
  auto child = a.child(Purpose::kEot, 5);
  (void)child.normal();
  EXPECT_EQ(a.normal(), b.normal());
  EXPECT_EQ(a.child(Purpose::kEot, 5).bits(), b.child(Purpose::kEot, 5).bits());
}

TEST(Rng, UniformRange) {
  NoiseStream a(9, 0, Purpose::kData);
  const Vector v = a.uniform_vector(1000, -2.0, 3.0);
  EXPECT_GE(v.minCoeff(), -2.0);
  EXPECT_LT(v.maxCoeff(), 3.0);
}
