#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chopnet/image.hpp"
#include "chopnet/network.hpp"
#include "chopnet/tile_engine.hpp"

namespace chopnet {

struct TilePrediction {
  int label = 0;
  float confidence = 0.0f;
  std::vector<float> probs;

  friend bool operator==(const TilePrediction&, const TilePrediction&) = default;
};

/// Per-tile predictions over a chopped image, row-major like the grid.
struct PredictionMap {
  TileGrid grid;
  std::vector<std::string> class_names;
  std::vector<TilePrediction> entries;

  const TilePrediction& at(TileIndex index) const { return entries.at(grid.linear(index)); }

  friend bool operator==(const PredictionMap&, const PredictionMap&) = default;
};

struct Rgba {
  std::uint8_t r = 0, g = 0, b = 0, a = 255;
};

struct Palette {
  std::vector<Rgba> colors;

  /// POL blue, TRA red, HYP green, NOM white (half-transparent), then a
  /// fixed fallback cycle for additional classes.
  static Palette defaults(int num_classes = 4);
  Rgba color(int class_id) const;
};

struct RegionSpec {
  std::string name;
  int label = 0;
  int x = 0, y = 0, width = 0, height = 0;
};

PredictionMap classify_image(const NetworkParams<float>& params, const ImageBuffer& image, int tile_size,
                             double overlap_fraction, const std::array<double, 3>& channel_means,
                             int batch_size = 64);

struct Overlay {
  ImageBuffer image;
  std::size_t circles = 0;
};

/// Blends a filled class-colored disc at every tile center whose confidence
/// is at least `min_confidence`. Discs are clipped at the image border.
Overlay render_overlay(const ImageBuffer& image, const PredictionMap& pmap, const Palette& palette, int radius,
                       double min_confidence);

struct RegionResult {
  std::string name;
  int label = 0;
  double accuracy = 0.0;
  int samples = 0;
  int correct = 0;
  std::size_t candidate_tiles = 0;
  std::size_t candidate_correct = 0;
  double exhaustive_fraction = 0.0;
};

struct ClassResult {
  int label = 0;
  int regions = 0;
  int samples = 0;
  int correct = 0;
  double accuracy = 0.0;
  std::size_t candidate_tiles = 0;
  std::size_t candidate_correct = 0;
  double exhaustive_fraction = 0.0;
};

struct RegionReport {
  std::vector<RegionResult> per_region;
  std::vector<ClassResult> per_class;  // classes that have at least one region, ascending id
};

/// Indices of tiles whose center lies in [x, x+w) x [y, y+h).
std::vector<std::size_t> tiles_centered_in(const TileGrid& grid, const RegionSpec& region);

/// For each region, draws `samples_per_region` tile centers uniformly with
/// replacement from the tiles centered inside it and scores predicted
/// label == region label. The exhaustive fraction over all candidate tiles
/// is reported alongside.
RegionReport evaluate_regions(const PredictionMap& pmap, const std::vector<RegionSpec>& regions,
                              int samples_per_region, std::uint64_t seed);

nlohmann::ordered_json predictions_to_json(const PredictionMap& pmap);
PredictionMap predictions_from_json(const nlohmann::json& j);

/// JSON array of {name, label, rect:[x,y,w,h]}; label is a class name or id.
std::vector<RegionSpec> regions_from_json(const nlohmann::json& j, const std::vector<std::string>& class_names);

nlohmann::ordered_json report_to_json(const RegionReport& report, const std::vector<std::string>& class_names);

}  // namespace chopnet
