#include "chopnet/mosaic.hpp"

#include <algorithm>
#include <string>

#include "chopnet/error.hpp"
#include "chopnet/rng.hpp"
#include "chopnet/trainer.hpp"

namespace chopnet {

Palette Palette::defaults(int num_classes) {
  static constexpr std::array<Rgba, 8> kCycle = {{
      {0, 0, 255, 128},      // POL blue
      {255, 0, 0, 128},      // TRA red
      {0, 255, 0, 128},      // HYP green
      {255, 255, 255, 128},  // NOM white
      {255, 255, 0, 128},
      {255, 0, 255, 128},
      {0, 255, 255, 128},
      {0, 0, 0, 128},
  }};
  Palette p;
  for (int i = 0; i < num_classes; ++i) p.colors.push_back(kCycle[static_cast<std::size_t>(i) % kCycle.size()]);
  return p;
}

Rgba Palette::color(int class_id) const {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= colors.size()) {
    throw Error(ErrorCode::LabelOutOfRange, "palette has no color for class " + std::to_string(class_id));
  }
  return colors[static_cast<std::size_t>(class_id)];
}

PredictionMap classify_image(const NetworkParams<float>& params, const ImageBuffer& image, int tile_size,
                             double overlap_fraction, const std::array<double, 3>& channel_means, int batch_size) {
  if (tile_size != params.arch.input_size || params.arch.input_channels != 3) {
    throw Error(ErrorCode::ArchMismatch, "tile size " + std::to_string(tile_size) + " does not match network input " +
                                             std::to_string(params.arch.input_size) + "x" +
                                             std::to_string(params.arch.input_size) + "x" +
                                             std::to_string(params.arch.input_channels));
  }
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch size must be >= 1");

  PredictionMap pmap;
  pmap.grid = plan_grid(image.width(), image.height(), tile_size, overlap_fraction);
  pmap.class_names = params.class_names;
  pmap.entries.reserve(pmap.grid.tile_count());

  const std::size_t classes = static_cast<std::size_t>(params.arch.num_classes);
  const std::size_t total = pmap.grid.tile_count();
  const std::size_t step = static_cast<std::size_t>(batch_size);
  std::vector<ImageBuffer> batch;
  for (std::size_t start = 0; start < total; start += step) {
    const std::size_t end = std::min(total, start + step);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(extract_tile(image, pmap.grid, pmap.grid.index_of(i)).pixels);
    }
    const ForwardResult<float> out = forward(params, preprocess(std::span<const ImageBuffer>(batch), channel_means));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const float* row = out.probs.data() + i * classes;
      TilePrediction p;
      p.probs.assign(row, row + classes);
      p.label = argmax(std::span<const float>(p.probs));
      p.confidence = p.probs[static_cast<std::size_t>(p.label)];
      pmap.entries.push_back(std::move(p));
    }
  }
  return pmap;
}

Overlay render_overlay(const ImageBuffer& image, const PredictionMap& pmap, const Palette& palette, int radius,
                       double min_confidence) {
  check_grid_matches(pmap.grid, image);
  if (pmap.entries.size() != pmap.grid.tile_count()) {
    throw Error(ErrorCode::GridMismatch, "prediction map has " + std::to_string(pmap.entries.size()) +
                                             " entries for a " + std::to_string(pmap.grid.tile_count()) + "-tile grid");
  }
  if (radius < 0) throw Error(ErrorCode::InvalidConfig, "circle radius must be >= 0");

  Overlay out{image, 0};
  const long r2 = static_cast<long>(radius) * radius;
  for (std::size_t i = 0; i < pmap.entries.size(); ++i) {
    const TilePrediction& p = pmap.entries[i];
    if (static_cast<double>(p.confidence) < min_confidence) continue;
    const Rgba c = palette.color(p.label);
    const PixelPoint center = tile_center(pmap.grid, pmap.grid.index_of(i));
    const int y0 = std::max(0, center.y - radius), y1 = std::min(image.height() - 1, center.y + radius);
    const int x0 = std::max(0, center.x - radius), x1 = std::min(image.width() - 1, center.x + radius);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const long dx = x - center.x, dy = y - center.y;
        if (dx * dx + dy * dy > r2) continue;
        const Rgb src = out.image.at(x, y);
        const auto blend = [a = static_cast<unsigned>(c.a)](std::uint8_t s, std::uint8_t d) {
          return static_cast<std::uint8_t>((s * (255u - a) + d * a + 127u) / 255u);
        };
        out.image.set(x, y, {blend(src.r, c.r), blend(src.g, c.g), blend(src.b, c.b)});
      }
    }
    ++out.circles;
  }
  return out;
}

std::vector<std::size_t> tiles_centered_in(const TileGrid& grid, const RegionSpec& region) {
  std::vector<std::size_t> found;
  for (std::size_t i = 0; i < grid.tile_count(); ++i) {
    const PixelPoint c = tile_center(grid, grid.index_of(i));
    if (c.x >= region.x && c.x < region.x + region.width && c.y >= region.y && c.y < region.y + region.height) {
      found.push_back(i);
    }
  }
  return found;
}

RegionReport evaluate_regions(const PredictionMap& pmap, const std::vector<RegionSpec>& regions,
                              int samples_per_region, std::uint64_t seed) {
  if (samples_per_region < 1) throw Error(ErrorCode::InvalidConfig, "samples per region must be >= 1");
  if (regions.empty()) throw Error(ErrorCode::EmptyRegion, "no regions given");
  if (pmap.entries.size() != pmap.grid.tile_count()) {
    throw Error(ErrorCode::GridMismatch, "prediction map size does not match its grid");
  }
  const int num_classes = static_cast<int>(pmap.class_names.size());

  RegionReport report;
  std::vector<ClassResult> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t ri = 0; ri < regions.size(); ++ri) {
    const RegionSpec& region = regions[ri];
    if (region.width < 1 || region.height < 1 || region.x < 0 || region.y < 0 ||
        region.x + region.width > pmap.grid.image_width || region.y + region.height > pmap.grid.image_height) {
      throw Error(ErrorCode::RegionOutOfBounds, "region '" + region.name + "' does not lie within the " +
                                                    std::to_string(pmap.grid.image_width) + "x" +
                                                    std::to_string(pmap.grid.image_height) + " image");
    }
    if (region.label < 0 || region.label >= num_classes) {
      throw Error(ErrorCode::LabelOutOfRange, "region '" + region.name + "' has an unknown label");
    }
    const std::vector<std::size_t> candidates = tiles_centered_in(pmap.grid, region);
    if (candidates.empty()) {
      throw Error(ErrorCode::EmptyRegion, "region '" + region.name + "' contains no tile centers");
    }

    RegionResult rr;
    rr.name = region.name;
    rr.label = region.label;
    rr.samples = samples_per_region;
    rr.candidate_tiles = candidates.size();
    for (const std::size_t i : candidates) {
      if (pmap.entries[i].label == region.label) ++rr.candidate_correct;
    }
    rr.exhaustive_fraction = static_cast<double>(rr.candidate_correct) / static_cast<double>(candidates.size());

    Rng rng(derive_seed(seed, ri));
    for (int s = 0; s < samples_per_region; ++s) {
      const std::size_t pick = candidates[rng.below(candidates.size())];
      if (pmap.entries[pick].label == region.label) ++rr.correct;
    }
    rr.accuracy = static_cast<double>(rr.correct) / static_cast<double>(rr.samples);

    ClassResult& cr = by_class[static_cast<std::size_t>(region.label)];
    cr.label = region.label;
    cr.regions += 1;
    cr.samples += rr.samples;
    cr.correct += rr.correct;
    cr.candidate_tiles += rr.candidate_tiles;
    cr.candidate_correct += rr.candidate_correct;
    report.per_region.push_back(std::move(rr));
  }
  for (auto& cr : by_class) {
    if (cr.regions == 0) continue;
    cr.accuracy = static_cast<double>(cr.correct) / static_cast<double>(cr.samples);
    cr.exhaustive_fraction = static_cast<double>(cr.candidate_correct) / static_cast<double>(cr.candidate_tiles);
    report.per_class.push_back(cr);
  }
  return report;
}

nlohmann::ordered_json predictions_to_json(const PredictionMap& pmap) {
  nlohmann::ordered_json j;
  const TileGrid& g = pmap.grid;
  j["image_width"] = g.image_width;
  j["image_height"] = g.image_height;
  j["tile_size"] = g.tile_size;
  j["overlap_fraction"] = g.overlap_fraction;
  j["stride"] = g.stride;
  j["rows"] = g.rows;
  j["cols"] = g.cols;
  j["classes"] = pmap.class_names;
  auto entries = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < pmap.entries.size(); ++i) {
    const TileIndex idx = g.index_of(i);
    const PixelPoint c = tile_center(g, idx);
    const TilePrediction& p = pmap.entries[i];
    nlohmann::ordered_json e;
    e["row"] = idx.row;
    e["col"] = idx.col;
    e["center"] = {c.x, c.y};
    e["class"] = p.label;
    e["class_name"] = pmap.class_names.at(static_cast<std::size_t>(p.label));
    e["confidence"] = p.confidence;
    e["probs"] = p.probs;
    entries.push_back(std::move(e));
  }
  j["entries"] = std::move(entries);
  return j;
}

PredictionMap predictions_from_json(const nlohmann::json& j) {
  PredictionMap pmap;
  try {
    const int width = j.at("image_width").get<int>();
    const int height = j.at("image_height").get<int>();
    const int tile = j.at("tile_size").get<int>();
    const double overlap = j.at("overlap_fraction").get<double>();
    pmap.grid = plan_grid(width, height, tile, overlap);
    if (pmap.grid.rows != j.at("rows").get<int>() || pmap.grid.cols != j.at("cols").get<int>() ||
        pmap.grid.stride != j.at("stride").get<int>()) {
      throw Error(ErrorCode::BadPredictions, "grid fields disagree with image and tile geometry");
    }
    pmap.class_names = j.at("classes").get<std::vector<std::string>>();
    const auto& entries = j.at("entries");
    if (entries.size() != pmap.grid.tile_count()) {
      throw Error(ErrorCode::BadPredictions, "expected " + std::to_string(pmap.grid.tile_count()) + " entries, found " +
                                                 std::to_string(entries.size()));
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      const TileIndex idx = pmap.grid.index_of(i);
      if (e.at("row").get<int>() != idx.row || e.at("col").get<int>() != idx.col) {
        throw Error(ErrorCode::BadPredictions, "entries are not in row-major order");
      }
      TilePrediction p;
      p.label = e.at("class").get<int>();
      p.confidence = e.at("confidence").get<float>();
      p.probs = e.at("probs").get<std::vector<float>>();
      if (p.label < 0 || static_cast<std::size_t>(p.label) >= pmap.class_names.size()) {
        throw Error(ErrorCode::BadPredictions, "entry " + std::to_string(i) + " has an unknown class");
      }
      pmap.entries.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadPredictions, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BadPredictions) throw;
    throw Error(ErrorCode::BadPredictions, e.detail());
  }
  return pmap;
}

std::vector<RegionSpec> regions_from_json(const nlohmann::json& j, const std::vector<std::string>& class_names) {
  std::vector<RegionSpec> regions;
  try {
    if (!j.is_array()) throw Error(ErrorCode::BadPredictions, "regions file must hold a JSON array");
    for (const auto& item : j) {
      RegionSpec r;
      r.name = item.at("name").get<std::string>();
      const auto& label = item.at("label");
      if (label.is_string()) {
        const auto name = label.get<std::string>();
        const auto it = std::find(class_names.begin(), class_names.end(), name);
        if (it == class_names.end()) throw Error(ErrorCode::LabelOutOfRange, "unknown class '" + name + "'");
        r.label = static_cast<int>(it - class_names.begin());
      } else {
        r.label = label.get<int>();
      }
      const auto rect = item.at("rect").get<std::vector<int>>();
      if (rect.size() != 4) throw Error(ErrorCode::BadPredictions, "rect must be [x, y, w, h]");
      r.x = rect[0];
      r.y = rect[1];
      r.width = rect[2];
      r.height = rect[3];
      regions.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadPredictions, std::string("regions: ") + e.what());
  }
  return regions;
}

nlohmann::ordered_json report_to_json(const RegionReport& report, const std::vector<std::string>& class_names) {
  const auto name_of = [&](int label) { return class_names.at(static_cast<std::size_t>(label)); };
  nlohmann::ordered_json j;
  auto per_region = nlohmann::ordered_json::array();
  auto exhaustive_region = nlohmann::ordered_json::array();
  for (const auto& r : report.per_region) {
    per_region.push_back({{"name", r.name}, {"label", name_of(r.label)}, {"accuracy", r.accuracy}, {"samples", r.samples}});
    exhaustive_region.push_back({{"name", r.name},
                                 {"label", name_of(r.label)},
                                 {"fraction", r.exhaustive_fraction},
                                 {"tiles", r.candidate_tiles}});
  }
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  nlohmann::ordered_json exhaustive_class = nlohmann::ordered_json::object();
  for (const auto& c : report.per_class) {
    per_class[name_of(c.label)] = {{"accuracy", c.accuracy}, {"samples", c.samples}, {"regions", c.regions}};
    exhaustive_class[name_of(c.label)] = {{"fraction", c.exhaustive_fraction}, {"tiles", c.candidate_tiles}};
  }
  j["per_region"] = std::move(per_region);
  j["per_class"] = std::move(per_class);
  j["exhaustive"] = {{"per_region", std::move(exhaustive_region)}, {"per_class", std::move(exhaustive_class)}};
  return j;
}

}  // namespace chopnet
