#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "ctxrw/error.hpp"
#include "ctxrw/rng.hpp"

using ctxrw::Rng;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, BelowCoversRangeUniformly) {
  Rng r(3);
  std::vector<int> hist(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++hist[r.below(7)];
  for (int h : hist) EXPECT_NEAR(h, n / 7.0, 5 * std::sqrt(n / 7.0));
}

TEST(Rng, CategoricalFollowsWeights) {
  Rng r(5);
  const std::vector<double> w = {1.0, 0.0, 3.0};
  std::vector<int> hist(3, 0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++hist[r.categorical(w)];
  EXPECT_EQ(hist[1], 0);
  EXPECT_NEAR(hist[2] / static_cast<double>(n), 0.75, 0.01);
}

TEST(Rng, CategoricalRejectsZeroMass) {
  Rng r(5);
  const std::vector<double> w = {0.0, 0.0};
  EXPECT_THROW(r.categorical(w), ctxrw::Error);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(9);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto s = v;
  r.shuffle(s);
  EXPECT_NE(s, v);
  std::sort(s.begin(), s.end());
  EXPECT_EQ(s, v);
}

TEST(Rng, MixSeparatesSalts) {
  EXPECT_NE(Rng::mix(1, 0), Rng::mix(1, 1));
  EXPECT_NE(Rng::mix(1, 0), Rng::mix(2, 0));
  EXPECT_EQ(Rng::mix(7, 11), Rng::mix(7, 11));
}
