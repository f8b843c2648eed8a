#include <gtest/gtest.h>

#include <chrono>

#include "chopnet/error.hpp"
#include "chopnet/rng.hpp"
#include "chopnet/tile_engine.hpp"
#include "expect_error.hpp"
#include "test_support.hpp"

namespace chopnet {
namespace {

using testing::brute_force_origins;
using testing::expect_error;

TEST(PlanGrid, FullFrameCameraImage) {
  const TileGrid g = plan_grid(4608, 3456, 56, 0.5);
  EXPECT_EQ(g.stride, 28);
  EXPECT_EQ(g.cols, 163);
  EXPECT_EQ(g.rows, 122);
  EXPECT_EQ(g.tile_count(), 19886u);
  EXPECT_EQ(brute_force_origins(4608, 3456, 56, 28).size(), 19886u);
}

TEST(PlanGrid, ImageEqualToOneTile) {
  const TileGrid g = plan_grid(56, 56, 56, 0.5);
  EXPECT_EQ(g.stride, 28);
  EXPECT_EQ(g.cols, 1);
  EXPECT_EQ(g.rows, 1);
}

TEST(PlanGrid, NoOverlap) {
  const TileGrid g = plan_grid(112, 56, 56, 0.0);
  EXPECT_EQ(g.stride, 56);
  EXPECT_EQ(g.cols, 2);
  EXPECT_EQ(g.rows, 1);
}

TEST(PlanGrid, StrideRoundsHalfUp) {
  EXPECT_EQ(stride_for(5, 0.5), 3);   // 2.5 -> 3
  EXPECT_EQ(stride_for(56, 0.25), 42);
  EXPECT_EQ(stride_for(10, 0.9), 1);
}

TEST(PlanGrid, Errors) {
  expect_error(ErrorCode::ImageTooSmall, [] { plan_grid(55, 100, 56, 0.5); });
  expect_error(ErrorCode::ImageTooSmall, [] { plan_grid(100, 55, 56, 0.5); });
  expect_error(ErrorCode::InvalidOverlap, [] { plan_grid(100, 100, 56, 1.0); });
  expect_error(ErrorCode::InvalidOverlap, [] { plan_grid(100, 100, 56, -0.1); });
  expect_error(ErrorCode::InvalidOverlap, [] { plan_grid(100, 100, 10, 0.99); });
}

TEST(PlanGrid, MatchesBruteForceOnRandomInstances) {
  Rng rng(20240501);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 1000; ++i) {
    const int s = 1 + static_cast<int>(rng.below(80));
    const int w = s + static_cast<int>(rng.below(400));
    const int h = s + static_cast<int>(rng.below(400));
    const double f = rng.uniform(0.0, 0.95);
    int stride = 0;
    try {
      stride = stride_for(s, f);
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::InvalidOverlap);
      continue;
    }
    const TileGrid g = plan_grid(w, h, s, f);
    const auto oracle = brute_force_origins(w, h, s, stride);
    ASSERT_EQ(g.tile_count(), oracle.size()) << w << "x" << h << " S=" << s << " f=" << f;
    for (std::size_t k = 0; k < oracle.size(); ++k) {
      ASSERT_EQ(tile_origin(g, g.index_of(k)), oracle[k]);
    }
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 5.0);
}

TEST(TileOrigin, RowColumnToPixels) {
  const TileGrid g = plan_grid(500, 300, 56, 0.5);
  EXPECT_EQ(tile_origin(g, {1, 2}), (PixelPoint{56, 28}));
  EXPECT_EQ(tile_center(g, {0, 0}), (PixelPoint{28, 28}));
  EXPECT_EQ(tile_center(g, {1, 2}), (PixelPoint{84, 56}));
  expect_error(ErrorCode::IndexOutOfGrid, [&] { tile_origin(g, {g.rows, 0}); });
  expect_error(ErrorCode::IndexOutOfGrid, [&] { tile_origin(g, {0, -1}); });
}

TEST(TileCenter, OddTileSizeFloors) {
  const TileGrid g = plan_grid(50, 50, 7, 0.0);
  EXPECT_EQ(tile_center(g, {1, 1}), (PixelPoint{10, 10}));
}

TEST(Coverage, InteriorPixelsSeenByExactlyFourTiles) {
  const int w = 500, h = 300, s = 56;
  const TileGrid g = plan_grid(w, h, s, 0.5);
  std::vector<int> hits(static_cast<std::size_t>(w * h), 0);
  for (std::size_t k = 0; k < g.tile_count(); ++k) {
    const PixelPoint o = tile_origin(g, g.index_of(k));
    for (int y = o.y; y < o.y + s; ++y)
      for (int x = o.x; x < o.x + s; ++x) ++hits[static_cast<std::size_t>(y * w + x)];
  }
  const int last_x = (g.cols - 1) * g.stride;
  const int last_y = (g.rows - 1) * g.stride;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int n = hits[static_cast<std::size_t>(y * w + x)];
      if (x >= s && x < last_x && y >= s && y < last_y) {
        ASSERT_EQ(n, 4) << "(" << x << ", " << y << ")";
      } else if (x >= last_x + s || y >= last_y + s) {
        ASSERT_EQ(n, 0) << "(" << x << ", " << y << ")";
      } else if (x < g.stride || y < g.stride) {
        ASSERT_LT(n, 4);
      }
    }
  }
}

TEST(Chop, TilesAreExactCropsInRowMajorOrder) {
  const ImageBuffer img = testing::random_image(150, 97, 3);
  const TileGrid g = plan_grid(img.width(), img.height(), 40, 0.5);
  const auto tiles = chop(img, g);
  ASSERT_EQ(tiles.size(), g.tile_count());
  for (std::size_t k = 0; k < tiles.size(); ++k) {
    const Tile& t = tiles[k];
    EXPECT_EQ(t.index, g.index_of(k));
    ASSERT_EQ(t.pixels.width(), 40);
    ASSERT_EQ(t.pixels.height(), 40);
    for (int y = 0; y < 40; y += 7)
      for (int x = 0; x < 40; x += 5) ASSERT_EQ(t.pixels.at(x, y), img.at(t.origin.x + x, t.origin.y + y));
  }
}

TEST(Chop, ReassemblesStrideGridWithoutOverlap) {
  const ImageBuffer img = testing::random_image(112, 168, 4);
  const TileGrid g = plan_grid(img.width(), img.height(), 56, 0.0);
  ImageBuffer rebuilt(img.width(), img.height());
  for (const Tile& t : chop(img, g)) rebuilt.paste(t.pixels, t.origin.x, t.origin.y);
  EXPECT_EQ(rebuilt, img);
}

TEST(Chop, Deterministic) {
  const ImageBuffer img = testing::random_image(120, 90, 5);
  const TileGrid g = plan_grid(120, 90, 30, 0.5);
  const auto a = chop(img, g);
  const auto b = chop(img, g);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].pixels, b[i].pixels);
}

TEST(Chop, RejectsMismatchedGrid) {
  const ImageBuffer img = testing::random_image(100, 100, 6);
  const TileGrid g = plan_grid(120, 100, 56, 0.5);
  expect_error(ErrorCode::GridMismatch, [&] { chop(img, g); });
  expect_error(ErrorCode::GridMismatch, [&] { extract_tile(img, g, {0, 0}); });
}

}  // namespace
}  // namespace chopnet
