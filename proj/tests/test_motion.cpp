#include <gtest/gtest.h>

#include "rainsense/motion.hpp"
#include "support.hpp"

using namespace rainsense;
using testing_support::Gen;

namespace {

GrayFrame frame(int w, int h, std::vector<double> px) { return GrayFrame(w, h, {}, std::move(px)); }

GrayFrame random_frame(Gen& g, int w, int h) { return frame(w, h, g.vec(static_cast<std::size_t>(w) * h, 0, 1)); }

}  // namespace

TEST(DeltaMap, IdenticalFramesGiveZero) {
  auto f = frame(2, 2, {0.1, 0.2, 0.3, 0.4});
  for (double v : delta_map(f, f).values) EXPECT_EQ(v, 0.0);
}

TEST(DeltaMap, BlackToWhiteGivesOne) {
  auto m = delta_map(frame(2, 1, {0, 0}), frame(2, 1, {1, 1}));
  EXPECT_EQ(m.values, (std::vector<double>{1, 1}));
}

TEST(DeltaMap, TwoPixelArithmetic) {
  auto m = delta_map(frame(2, 1, {0.2, 0.9}), frame(2, 1, {0.5, 0.4}));
  EXPECT_NEAR(m.at(0, 0), 0.3, 1e-15);
  EXPECT_NEAR(m.at(1, 0), 0.5, 1e-15);
}

TEST(DeltaMap, DimensionMismatchRejected) {
  EXPECT_THROW(delta_map(frame(2, 1, {0, 0}), frame(1, 2, {0, 0})), Error);
}

TEST(DeltaMap, OutOfRangePixelRejected) { EXPECT_THROW(frame(1, 1, {1.5}), Error); }

TEST(DeltaMapProperty, SymmetricAndTriangle) {
  Gen g(21);
  for (int trial = 0; trial < 100; ++trial) {
    int w = g.integer(1, 9), h = g.integer(1, 9);
    auto a = random_frame(g, w, h), b = random_frame(g, w, h), c = random_frame(g, w, h);
    auto ab = delta_map(a, b), ba = delta_map(b, a), bc = delta_map(b, c), ac = delta_map(a, c);
    for (std::size_t i = 0; i < ab.values.size(); ++i) {
      EXPECT_EQ(ab.values[i], ba.values[i]);
      EXPECT_LE(ac.values[i], ab.values[i] + bc.values[i] + 1e-15);
      EXPECT_GE(ab.values[i], 0.0);
      EXPECT_LE(ab.values[i], 1.0);
    }
  }
}

TEST(MeanMap, SingleMapIsItself) {
  DeltaMap m{2, 1, {}, {0.25, 0.75}};
  EXPECT_EQ(mean_map(std::vector<DeltaMap>{m}).values, m.values);
}

TEST(MeanMap, Symmetry) {
  std::vector<DeltaMap> maps{{2, 1, {}, {0, 0}}, {2, 1, {}, {1, 1}}};
  EXPECT_EQ(mean_map(maps).values, (std::vector<double>{0.5, 0.5}));
}

TEST(MeanMap, ThreeMaps) {
  std::vector<DeltaMap> maps{{1, 1, {}, {0.1}}, {1, 1, {}, {0.2}}, {1, 1, {}, {0.6}}};
  EXPECT_NEAR(mean_map(maps).values[0], 0.3, 1e-15);
}

TEST(MeanMap, EmptyAndMismatchRejected) {
  EXPECT_THROW(mean_map(std::vector<DeltaMap>{}), Error);
  std::vector<DeltaMap> maps{{1, 1, {}, {0.1}}, {2, 1, {}, {0.2, 0.1}}};
  EXPECT_THROW(mean_map(maps), Error);
}

TEST(MeanMapProperty, NeverExceedsPixelwiseMax) {
  Gen g(22);
  for (int trial = 0; trial < 100; ++trial) {
    int n = g.integer(1, 20);
    std::vector<DeltaMap> maps;
    double shared = g.uniform();
    for (int i = 0; i < n; ++i) {
      DeltaMap m{3, 2, {}, g.vec(6, 0, 1)};
      m.values[0] = shared;  // identical inputs are where rounding would show
      maps.push_back(m);
    }
    auto mean = mean_map(maps);
    for (std::size_t p = 0; p < 6; ++p) {
      double mx = 0;
      for (const auto& m : maps) mx = std::max(mx, m.values[p]);
      EXPECT_LE(mean.values[p], mx);
    }
  }
}
