#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "chopnet/image.hpp"

namespace chopnet {

struct ClassLabel {
  int id = 0;
  std::string name;

  friend bool operator==(const ClassLabel&, const ClassLabel&) = default;
};

/// POL, TRA, HYP, NOM with ids 0..3.
std::vector<ClassLabel> default_classes();

/// Builds a contiguous class table from names in order; names must be unique.
std::vector<ClassLabel> make_classes(std::span<const std::string> names);

/// Resolves a label given either as a class name or as a decimal id.
std::optional<int> resolve_label(std::span<const ClassLabel> classes, std::string_view text);

enum class Split { Train, Val, None };

std::string_view to_string(Split split) noexcept;
std::optional<Split> parse_split(std::string_view text) noexcept;

struct TileRecord {
  std::string tile_id;
  std::string source_image;
  int row = 0;
  int col = 0;
  int x = 0;
  int y = 0;
  int size = 0;
  int label = 0;
  Split split = Split::None;
  bool rejected = false;

  friend bool operator==(const TileRecord&, const TileRecord&) = default;
};

struct DatasetManifest {
  std::vector<ClassLabel> classes;
  std::vector<TileRecord> records;
  std::uint64_t seed = 0;
  int tile_size = 56;
  double overlap_fraction = 0.5;
  std::array<double, 3> channel_means{0.0, 0.0, 0.0};

  std::size_t count(Split split) const noexcept;
  std::size_t usable_count() const noexcept;
  const TileRecord* find(std::string_view tile_id) const noexcept;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// "{stem}_r{row}_c{col}".
std::string make_tile_id(std::string_view stem, int row, int col);

/// On-disk layout of a dataset directory:
///   manifest.jsonl, tiles/{tile_id}.png, curation.log
class TileStore {
 public:
  explicit TileStore(std::filesystem::path dataset_dir) : root_(std::move(dataset_dir)) {}

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path manifest_path() const { return root_ / "manifest.jsonl"; }
  std::filesystem::path tiles_dir() const { return root_ / "tiles"; }
  std::filesystem::path curation_log_path() const { return root_ / "curation.log"; }
  std::filesystem::path tile_path(std::string_view tile_id) const;

  ImageBuffer load_tile(std::string_view tile_id) const;
  std::vector<std::uint8_t> tile_bytes(std::string_view tile_id) const;

 private:
  std::filesystem::path root_;
};

struct SourceImage {
  std::filesystem::path path;
  int label = 0;
};

/// Chops every source and writes each tile to the store as PNG. All records
/// start with split=none, rejected=false.
DatasetManifest build_manifest(std::span<const SourceImage> sources, std::vector<ClassLabel> classes,
                               int tile_size, double overlap_fraction, const TileStore& store);

struct RejectOutcome {
  DatasetManifest manifest;
  std::size_t rejected = 0;
  std::vector<std::string> unknown_ids;
};

RejectOutcome apply_reject_list(DatasetManifest manifest, const std::set<std::string>& reject_ids);

/// Stratified per class; a record's side is a pure function of (seed, tile_id).
DatasetManifest split(DatasetManifest manifest, double val_fraction, std::uint64_t seed);

std::array<double, 3> compute_channel_means(const DatasetManifest& manifest, const TileStore& store);
std::array<double, 3> compute_channel_means(std::span<const ImageBuffer> tiles);

struct LabeledTiles {
  std::vector<ImageBuffer> tiles;
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const noexcept { return tiles.size(); }
};

LabeledTiles load_split(const DatasetManifest& manifest, const TileStore& store, Split split);

nlohmann::ordered_json record_to_json(const TileRecord& record);

// JSON Lines: header object, then one object per record.
std::string serialize_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

// One tile id per line; '#' starts a comment; blank lines ignored.
std::set<std::string> parse_reject_list(std::string_view text);
std::set<std::string> read_reject_list(const std::filesystem::path& path);
std::string format_reject_list(const std::set<std::string>& ids);

}  // namespace chopnet
