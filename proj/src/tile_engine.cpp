#include "chopnet/tile_engine.hpp"

#include <cmath>
#include <string>

#include "chopnet/error.hpp"

namespace chopnet {

int stride_for(int tile_size, double overlap_fraction) {
  if (!std::isfinite(overlap_fraction) || overlap_fraction < 0.0 || overlap_fraction >= 1.0) {
    throw Error(ErrorCode::InvalidOverlap,
                "overlap fraction must be in [0, 1), got " + std::to_string(overlap_fraction));
  }
  if (tile_size < 1) {
    throw Error(ErrorCode::ImageTooSmall, "tile size must be at least 1");
  }
  const int stride = static_cast<int>(std::floor(tile_size * (1.0 - overlap_fraction) + 0.5));
  if (stride < 1) {
    throw Error(ErrorCode::InvalidOverlap, "overlap " + std::to_string(overlap_fraction) +
                                               " leaves a stride below one pixel for tile size " +
                                               std::to_string(tile_size));
  }
  return stride;
}

TileGrid plan_grid(int width, int height, int tile_size, double overlap_fraction) {
  const int stride = stride_for(tile_size, overlap_fraction);
  if (width < tile_size || height < tile_size) {
    throw Error(ErrorCode::ImageTooSmall, "image " + std::to_string(width) + "x" + std::to_string(height) +
                                              " is smaller than tile size " + std::to_string(tile_size));
  }
  TileGrid grid;
  grid.image_width = width;
  grid.image_height = height;
  grid.tile_size = tile_size;
  grid.overlap_fraction = overlap_fraction;
  grid.stride = stride;
  grid.cols = (width - tile_size) / stride + 1;
  grid.rows = (height - tile_size) / stride + 1;
  return grid;
}

void check_grid_matches(const TileGrid& grid, const ImageBuffer& image) {
  if (grid.image_width != image.width() || grid.image_height != image.height()) {
    throw Error(ErrorCode::GridMismatch, "grid planned for " + std::to_string(grid.image_width) + "x" +
                                             std::to_string(grid.image_height) + " but image is " +
                                             std::to_string(image.width()) + "x" + std::to_string(image.height()));
  }
  const bool fits = grid.stride >= 1 && grid.tile_size >= 1 && grid.cols >= 1 && grid.rows >= 1 &&
                    (grid.cols - 1) * grid.stride + grid.tile_size <= image.width() &&
                    (grid.rows - 1) * grid.stride + grid.tile_size <= image.height();
  if (!fits) {
    throw Error(ErrorCode::GridMismatch, "grid tiles overhang the image");
  }
}

PixelPoint tile_origin(const TileGrid& grid, TileIndex index) {
  if (!grid.contains(index)) {
    throw Error(ErrorCode::IndexOutOfGrid, "tile (" + std::to_string(index.row) + ", " +
                                               std::to_string(index.col) + ") outside " +
                                               std::to_string(grid.rows) + "x" + std::to_string(grid.cols) + " grid");
  }
  return {index.col * grid.stride, index.row * grid.stride};
}

PixelPoint tile_center(const TileGrid& grid, TileIndex index) {
  const PixelPoint origin = tile_origin(grid, index);
  return {origin.x + grid.tile_size / 2, origin.y + grid.tile_size / 2};
}

Tile extract_tile(const ImageBuffer& image, const TileGrid& grid, TileIndex index) {
  check_grid_matches(grid, image);
  const PixelPoint origin = tile_origin(grid, index);
  return {index, origin, image.crop(origin.x, origin.y, grid.tile_size, grid.tile_size)};
}

std::vector<Tile> chop(const ImageBuffer& image, const TileGrid& grid) {
  check_grid_matches(grid, image);
  std::vector<Tile> tiles;
  tiles.reserve(grid.tile_count());
  for (int row = 0; row < grid.rows; ++row) {
    for (int col = 0; col < grid.cols; ++col) {
      const PixelPoint origin{col * grid.stride, row * grid.stride};
      tiles.push_back({{row, col}, origin, image.crop(origin.x, origin.y, grid.tile_size, grid.tile_size)});
    }
  }
  return tiles;
}

}  // namespace chopnet
