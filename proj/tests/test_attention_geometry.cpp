#include <gtest/gtest.h>

#include <cmath>

#include "checks.hpp"
#include "fixtures.hpp"
#include "verbdiff/attention_geometry.hpp"

using namespace verbdiff;
using verbdiff::testing::Gen;

namespace {

Grid delta(int height, int width, int row, int col) {
  Grid g(height, width);
  g(row, col) = 1.0;
  return g;
}

AttentionStack two_token_stack() {
  AttentionStack s;
  s.height = 2;
  s.width = 3;
  Grid a(2, 3), b(2, 3), c(2, 3);
  for (int i = 0; i < 6; ++i) {
    a.values()[i] = i;
    b.values()[i] = 6 - i;
    c.values()[i] = i == 4 ? 1.0 : 0.0;
  }
  s.token_maps = {{0, a}, {1, b}, {2, c}};
  s.token_spans = {{Role::human, {0}}, {Role::verb, {0, 1}}, {Role::object, {2}}};
  return s;
}

}  // namespace

TEST(AggregateTokenMap, SingleTokenIsIdentity) {
  const AttentionStack s = two_token_stack();
  EXPECT_EQ(aggregate_token_map(s, Role::human), s.token_maps.at(0));
}

TEST(AggregateTokenMap, MeanOfTwoMaps) {
  const AttentionStack s = two_token_stack();
  const Grid mean = aggregate_token_map(s, Role::verb);
  for (double v : mean.values()) EXPECT_DOUBLE_EQ(v, 3.0);

  AttentionStack same = s;
  same.token_maps[1] = same.token_maps[0];
  EXPECT_EQ(aggregate_token_map(same, Role::verb), s.token_maps.at(0));
}

TEST(AggregateTokenMap, RejectsEmptySpan) {
  AttentionStack s = two_token_stack();
  s.token_spans[Role::object].clear();
  EXPECT_THROW(aggregate_token_map(s, Role::object), DataError);
  EXPECT_THROW(s.validate(), DataError);
}

TEST(AttentionStack, ValidateCatchesBadMaps) {
  AttentionStack s = two_token_stack();
  EXPECT_NO_THROW(s.validate());
  s.token_maps[2](0, 0) = -0.1;
  EXPECT_THROW(s.validate(), DataError);
  s = two_token_stack();
  s.token_spans[Role::human] = {7};
  EXPECT_THROW(s.validate(), DataError);
  s = two_token_stack();
  s.token_maps[1] = Grid(3, 3);
  EXPECT_THROW(s.validate(), DataError);
}

TEST(Centroid, Examples) {
  EXPECT_EQ(centroid(Grid(4, 4, 1.0)), (Centroid{1.5, 1.5}));
  EXPECT_EQ(centroid(delta(8, 8, 2, 3)), (Centroid{3.0, 2.0}));
  EXPECT_THROW(centroid(Grid(3, 3)), DegenerateError);
}

TEST(Centroid, MatchesMomentOracle) {
  const auto report = verbdiff::testing::centroid_suite(100, 77);
  EXPECT_EQ(report.maps, 100);
  EXPECT_LE(report.max_error, verbdiff::testing::kCentroidTolerance);
  EXPECT_TRUE(report.uniform_exact);
  EXPECT_TRUE(report.delta_exact);
}

TEST(Centroid, ScaleInvariant) {
  Gen gen(4);
  for (int i = 0; i < 100; ++i) {
    const Grid map = gen.nonnegative_grid(gen.integer(1, 12), gen.integer(1, 12));
    Grid scaled = map;
    const double s = std::pow(10.0, gen.uniform(-3, 3));
    for (double& v : scaled.values()) v *= s;
    const Centroid a = centroid(map), b = centroid(scaled);
    EXPECT_NEAR(a.x, b.x, 1e-9);
    EXPECT_NEAR(a.y, b.y, 1e-9);
  }
}

TEST(Centroid, DeltaTranslationCovariant) {
  Gen gen(8);
  for (int i = 0; i < 200; ++i) {
    const int h = gen.integer(2, 16), w = gen.integer(2, 16);
    const int r = gen.integer(0, h - 1), c = gen.integer(0, w - 1);
    const int dr = gen.integer(-r, h - 1 - r), dc = gen.integer(-c, w - 1 - c);
    const Centroid a = centroid(delta(h, w, r, c));
    const Centroid b = centroid(delta(h, w, r + dr, c + dc));
    EXPECT_EQ(b.x - a.x, dc);
    EXPECT_EQ(b.y - a.y, dr);
  }
}

TEST(Centroid, StaysOnGrid) {
  Gen gen(12);
  for (int i = 0; i < 100; ++i) {
    const int h = gen.integer(1, 10), w = gen.integer(1, 10);
    const Centroid c = centroid(gen.nonnegative_grid(h, w));
    EXPECT_GE(c.x, 0.0);
    EXPECT_LE(c.x, w - 1.0);
    EXPECT_GE(c.y, 0.0);
    EXPECT_LE(c.y, h - 1.0);
  }
}

TEST(InteractionCenter, Examples) {
  EXPECT_EQ(interaction_center({0, 0}, {3, 0}, {0, 3}), (Centroid{1, 1}));
  EXPECT_EQ(interaction_center({2, 1}, {4, 5}, {9, 0}), (Centroid{5, 2}));
  Gen gen(2);
  for (int i = 0; i < 100; ++i) {
    const Centroid p{gen.uniform(0, 15), gen.uniform(0, 15)};
    const Centroid c = interaction_center(p, p, p);
    EXPECT_NEAR(c.x, p.x, 1e-12);
    EXPECT_NEAR(c.y, p.y, 1e-12);
  }
}

TEST(InteractionRegion, Example) {
  const InteractionRegion r = interaction_region({8, 8}, {5, 8}, {11, 8}, 16, 16);
  EXPECT_DOUBLE_EQ(r.half_extent, 6.0);
  EXPECT_EQ(r.center, (Centroid{8, 8}));
  EXPECT_DOUBLE_EQ(r.clipped_box.x_min, 2.0 / 15.0);
  EXPECT_DOUBLE_EQ(r.clipped_box.y_min, 2.0 / 15.0);
  EXPECT_DOUBLE_EQ(r.clipped_box.x_max, 14.0 / 15.0);
  EXPECT_DOUBLE_EQ(r.clipped_box.y_max, 14.0 / 15.0);

  RegionOptions squared;
  squared.exponent = 2.0;
  EXPECT_DOUBLE_EQ(interaction_region({8, 8}, {5, 8}, {11, 8}, 16, 16, squared).half_extent, 36.0);
}

TEST(InteractionRegion, ClampAtZeroDistance) {
  const InteractionRegion r = interaction_region({4, 4}, {4, 4}, {4, 4}, 16, 16);
  EXPECT_DOUBLE_EQ(r.half_extent, 0.05 * 16);
  EXPECT_TRUE(r.clipped_box.valid());
}

TEST(InteractionRegion, RejectsBadOptions) {
  RegionOptions cubic;
  cubic.exponent = 3.0;
  EXPECT_THROW(interaction_region({1, 1}, {0, 0}, {2, 2}, 8, 8, cubic), ConfigError);
  RegionOptions zero;
  zero.min_extent = 0.0;
  EXPECT_THROW(interaction_region({1, 1}, {0, 0}, {2, 2}, 8, 8, zero), ConfigError);
}

TEST(InteractionRegion, ClippedToUnitSquareAndMonotone) {
  Gen gen(31);
  for (int i = 0; i < 300; ++i) {
    const int h = gen.integer(2, 32), w = gen.integer(2, 32);
    const Centroid c{gen.uniform(0, w - 1), gen.uniform(0, h - 1)};
    const Centroid human{gen.uniform(0, w - 1), gen.uniform(0, h - 1)};
    const Centroid object{gen.uniform(0, w - 1), gen.uniform(0, h - 1)};
    RegionOptions opt;
    opt.exponent = gen.integer(1, 2);
    const InteractionRegion r = interaction_region(c, human, object, h, w, opt);
    EXPECT_TRUE(r.clipped_box.valid());

    // Move the object further from the human along the same ray.
    const double k = gen.uniform(1.0, 3.0);
    const Centroid further{human.x + k * (object.x - human.x), human.y + k * (object.y - human.y)};
    EXPECT_GE(interaction_region(c, human, further, h, w, opt).half_extent, r.half_extent);
  }
}

TEST(RasterizeBox, PixelCenters) {
  const Grid g = rasterize_box({0.25, 0.0, 0.75, 0.5}, 4, 4);
  EXPECT_DOUBLE_EQ(g.sum(), 4.0);
  EXPECT_EQ(g(0, 1), 1.0);
  EXPECT_EQ(g(1, 2), 1.0);
  EXPECT_EQ(g(2, 1), 0.0);
  EXPECT_EQ(g(0, 0), 0.0);
}

TEST(CropRegion, FullRegionIsIdentity) {
  Gen gen(1);
  const Image img = gen.image(3, 8, 8);
  InteractionRegion full;
  full.clipped_box = {0, 0, 1, 1};
  EXPECT_EQ(crop_region(img, full), img);
  const Image black(3, 8, 8);
  EXPECT_EQ(crop_region(black, interaction_region({2, 2}, {1, 1}, {3, 3}, 8, 8)), black);
}

TEST(CropRegion, MinimumRegionCount) {
  // 16x16 grid, c_h == c_o at (7.5, 7.5): half extent 0.8 px, box [6.7, 8.3] / 15.
  // Pixel centers (c + 0.5) / 16 inside that range: columns 7 and 8.
  const InteractionRegion r = interaction_region({7.5, 7.5}, {7.5, 7.5}, {7.5, 7.5}, 16, 16);
  const Image ones(1, 16, 16, 1.0);
  const Image out = crop_region(ones, r);
  int count = 0;
  for (int row = 0; row < 16; ++row)
    for (int col = 0; col < 16; ++col) {
      const double x = (col + 0.5) / 16.0, y = (row + 0.5) / 16.0;
      const bool inside = x >= 6.7 / 15.0 && x <= 8.3 / 15.0 && y >= 6.7 / 15.0 && y <= 8.3 / 15.0;
      EXPECT_EQ(out.at(0, row, col), inside ? 1.0 : 0.0);
      count += inside ? 1 : 0;
    }
  EXPECT_EQ(count, 4);
}

TEST(CropRegion, Idempotent) {
  Gen gen(17);
  for (int i = 0; i < 50; ++i) {
    const int h = gen.integer(2, 16), w = gen.integer(2, 16);
    const Image img = gen.image(gen.integer(1, 4), h, w);
    const InteractionRegion r = interaction_region({gen.uniform(0, w - 1), gen.uniform(0, h - 1)},
                                                   {gen.uniform(0, w - 1), gen.uniform(0, h - 1)},
                                                   {gen.uniform(0, w - 1), gen.uniform(0, h - 1)}, h, w);
    const Image once = crop_region(img, r);
    EXPECT_EQ(crop_region(once, r), once);
    EXPECT_TRUE(once.same_shape(img));
  }
}

TEST(ExtractRegion, EndToEnd) {
  AttentionStack s;
  s.height = s.width = 16;
  s.token_maps = {{1, delta(16, 16, 8, 5)}, {2, delta(16, 16, 8, 8)}, {3, delta(16, 16, 8, 11)}};
  s.token_spans = {{Role::human, {1}}, {Role::verb, {2}}, {Role::object, {3}}};
  const RegionExtraction e = extract_region(s);
  EXPECT_EQ(e.center, (Centroid{8, 8}));
  EXPECT_DOUBLE_EQ(e.region.half_extent, 6.0);
}
