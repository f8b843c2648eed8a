#pragma once

#include <cstddef>
#include <vector>

#include "chopnet/image.hpp"

namespace chopnet {

struct TileIndex {
  int row = 0;
  int col = 0;

  friend bool operator==(const TileIndex&, const TileIndex&) = default;
};

struct PixelPoint {
  int x = 0;
  int y = 0;

  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

/// Geometry of an overlapping square chop. Only tiles that fit entirely
/// inside the image are part of the grid; the uncovered right/bottom margin
/// is at most stride - 1 pixels.
struct TileGrid {
  int image_width = 0;
  int image_height = 0;
  int tile_size = 0;
  double overlap_fraction = 0.0;
  int stride = 0;
  int cols = 0;
  int rows = 0;

  std::size_t tile_count() const noexcept {
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }
  bool contains(TileIndex index) const noexcept {
    return index.row >= 0 && index.row < rows && index.col >= 0 && index.col < cols;
  }
  /// Row-major position of `index`; callers check contains() first.
  std::size_t linear(TileIndex index) const noexcept {
    return static_cast<std::size_t>(index.row) * static_cast<std::size_t>(cols) +
           static_cast<std::size_t>(index.col);
  }
  TileIndex index_of(std::size_t linear_index) const noexcept {
    return {static_cast<int>(linear_index / static_cast<std::size_t>(cols)),
            static_cast<int>(linear_index % static_cast<std::size_t>(cols))};
  }

  friend bool operator==(const TileGrid&, const TileGrid&) = default;
};

struct Tile {
  TileIndex index;
  PixelPoint origin;
  ImageBuffer pixels;
};

/// stride = round_half_up(tile_size * (1 - overlap_fraction)).
int stride_for(int tile_size, double overlap_fraction);

TileGrid plan_grid(int width, int height, int tile_size, double overlap_fraction);

/// Throws GridMismatch if `grid` was not planned for an image of this size.
void check_grid_matches(const TileGrid& grid, const ImageBuffer& image);

/// All tiles in row-major order, each a byte-exact copy of its source square.
std::vector<Tile> chop(const ImageBuffer& image, const TileGrid& grid);

/// Single tile extraction; same contract as chop() for one index.
Tile extract_tile(const ImageBuffer& image, const TileGrid& grid, TileIndex index);

PixelPoint tile_origin(const TileGrid& grid, TileIndex index);

/// (col*stride + S/2, row*stride + S/2), with S/2 floored for odd S.
PixelPoint tile_center(const TileGrid& grid, TileIndex index);

}  // namespace chopnet
