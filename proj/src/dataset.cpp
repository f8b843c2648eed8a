#include "chopnet/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "chopnet/error.hpp"
#include "chopnet/rng.hpp"
#include "chopnet/tile_engine.hpp"

namespace chopnet {

using ordered_json = nlohmann::ordered_json;

std::vector<ClassLabel> default_classes() {
  return {{0, "POL"}, {1, "TRA"}, {2, "HYP"}, {3, "NOM"}};
}

std::vector<ClassLabel> make_classes(std::span<const std::string> names) {
  std::vector<ClassLabel> classes;
  std::set<std::string> seen;
  for (const auto& name : names) {
    if (name.empty()) throw Error(ErrorCode::UnknownLabel, "class names must be non-empty");
    if (!seen.insert(name).second) throw Error(ErrorCode::UnknownLabel, "duplicate class name " + name);
    classes.push_back({static_cast<int>(classes.size()), name});
  }
  if (classes.empty()) throw Error(ErrorCode::UnknownLabel, "class table is empty");
  return classes;
}

std::optional<int> resolve_label(std::span<const ClassLabel> classes, std::string_view text) {
  for (const auto& c : classes) {
    if (c.name == text) return c.id;
  }
  int id = -1;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), id);
  if (ec == std::errc() && ptr == text.data() + text.size() && id >= 0 &&
      id < static_cast<int>(classes.size())) {
    return id;
  }
  return std::nullopt;
}

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::None: return "none";
  }
  return "none";
}

std::optional<Split> parse_split(std::string_view text) noexcept {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "none") return Split::None;
  return std::nullopt;
}

std::size_t DatasetManifest::count(Split s) const noexcept {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [s](const TileRecord& r) { return r.split == s; }));
}

std::size_t DatasetManifest::usable_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const TileRecord& r) { return !r.rejected; }));
}

const TileRecord* DatasetManifest::find(std::string_view tile_id) const noexcept {
  for (const auto& r : records) {
    if (r.tile_id == tile_id) return &r;
  }
  return nullptr;
}

std::string make_tile_id(std::string_view stem, int row, int col) {
  return std::string(stem) + "_r" + std::to_string(row) + "_c" + std::to_string(col);
}

std::filesystem::path TileStore::tile_path(std::string_view tile_id) const {
  return tiles_dir() / (std::string(tile_id) + ".png");
}

ImageBuffer TileStore::load_tile(std::string_view tile_id) const { return load_image(tile_path(tile_id)); }

std::vector<std::uint8_t> TileStore::tile_bytes(std::string_view tile_id) const {
  const auto path = tile_path(tile_id);
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::NotFound, "no stored image for tile " + std::string(tile_id));
  }
  return read_file_bytes(path);
}

DatasetManifest build_manifest(std::span<const SourceImage> sources, std::vector<ClassLabel> classes,
                               int tile_size, double overlap_fraction, const TileStore& store) {
  std::map<std::string, std::string> stems;
  for (const auto& src : sources) {
    const std::string stem = src.path.stem().string();
    const auto [it, inserted] = stems.emplace(stem, src.path.string());
    if (!inserted) {
      throw Error(ErrorCode::DuplicateTileId, "sources " + it->second + " and " + src.path.string() +
                                                  " share the file stem '" + stem + "'");
    }
    if (src.label < 0 || src.label >= static_cast<int>(classes.size())) {
      throw Error(ErrorCode::UnknownLabel, "label id " + std::to_string(src.label) + " for " +
                                               src.path.string() + " is not in the class table");
    }
  }

  std::filesystem::create_directories(store.tiles_dir());

  DatasetManifest manifest;
  manifest.classes = std::move(classes);
  manifest.tile_size = tile_size;
  manifest.overlap_fraction = overlap_fraction;
  for (const auto& src : sources) {
    const ImageBuffer image = load_image(src.path);
    TileGrid grid;
    try {
      grid = plan_grid(image.width(), image.height(), tile_size, overlap_fraction);
    } catch (const Error& e) {
      throw Error(e.code(), src.path.string() + ": " + e.detail());
    }
    const std::string stem = src.path.stem().string();
    for (const Tile& tile : chop(image, grid)) {
      TileRecord rec;
      rec.tile_id = make_tile_id(stem, tile.index.row, tile.index.col);
      rec.source_image = src.path.string();
      rec.row = tile.index.row;
      rec.col = tile.index.col;
      rec.x = tile.origin.x;
      rec.y = tile.origin.y;
      rec.size = tile_size;
      rec.label = src.label;
      save_png(tile.pixels, store.tile_path(rec.tile_id));
      manifest.records.push_back(std::move(rec));
    }
  }
  return manifest;
}

RejectOutcome apply_reject_list(DatasetManifest manifest, const std::set<std::string>& reject_ids) {
  RejectOutcome out;
  std::unordered_set<std::string> matched;
  for (auto& rec : manifest.records) {
    if (reject_ids.count(rec.tile_id)) {
      rec.rejected = true;
      rec.split = Split::None;
      matched.insert(rec.tile_id);
    }
  }
  out.rejected = matched.size();
  for (const auto& id : reject_ids) {
    if (!matched.count(id)) out.unknown_ids.push_back(id);
  }
  out.manifest = std::move(manifest);
  return out;
}

DatasetManifest split(DatasetManifest manifest, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "validation fraction must be in (0, 1)");
  }
  std::vector<std::vector<std::size_t>> by_class(manifest.classes.size());
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    auto& rec = manifest.records[i];
    if (rec.rejected) {
      rec.split = Split::None;
      continue;
    }
    by_class.at(static_cast<std::size_t>(rec.label)).push_back(i);
  }
  if (manifest.usable_count() == 0) {
    throw Error(ErrorCode::EmptyDataset, "no usable (non-rejected) tiles to split");
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) {
      throw Error(ErrorCode::DegenerateClass, "class '" + manifest.classes[c].name + "' has no usable tiles");
    }
  }

  const std::uint64_t seed_key = splitmix64(seed);
  for (auto& members : by_class) {
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    keyed.reserve(members.size());
    for (const std::size_t i : members) {
      keyed.emplace_back(splitmix64(fnv1a64(manifest.records[i].tile_id) ^ seed_key), i);
    }
    std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return manifest.records[a.second].tile_id < manifest.records[b.second].tile_id;
    });
    const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(members.size()) + 0.5));
    for (std::size_t k = 0; k < keyed.size(); ++k) {
      manifest.records[keyed[k].second].split = k < n_val ? Split::Val : Split::Train;
    }
  }
  manifest.seed = seed;
  return manifest;
}

namespace {

struct ChannelSums {
  std::array<std::uint64_t, 3> sum{0, 0, 0};
  std::uint64_t pixels = 0;

  void add(const ImageBuffer& tile) {
    const auto data = tile.data();
    for (std::size_t i = 0; i < data.size(); i += 3) {
      sum[0] += data[i];
      sum[1] += data[i + 1];
      sum[2] += data[i + 2];
    }
    pixels += data.size() / 3;
  }

  std::array<double, 3> means() const {
    const auto n = static_cast<double>(pixels);
    return {static_cast<double>(sum[0]) / n, static_cast<double>(sum[1]) / n, static_cast<double>(sum[2]) / n};
  }
};

}  // namespace

std::array<double, 3> compute_channel_means(std::span<const ImageBuffer> tiles) {
  ChannelSums sums;
  for (const auto& t : tiles) sums.add(t);
  if (sums.pixels == 0) throw Error(ErrorCode::EmptyDataset, "no training pixels to average");
  return sums.means();
}

std::array<double, 3> compute_channel_means(const DatasetManifest& manifest, const TileStore& store) {
  ChannelSums sums;
  for (const auto& rec : manifest.records) {
    if (rec.split == Split::Train && !rec.rejected) sums.add(store.load_tile(rec.tile_id));
  }
  if (sums.pixels == 0) throw Error(ErrorCode::EmptyDataset, "train split is empty");
  return sums.means();
}

LabeledTiles load_split(const DatasetManifest& manifest, const TileStore& store, Split which) {
  LabeledTiles out;
  for (const auto& rec : manifest.records) {
    if (rec.split != which || rec.rejected) continue;
    ImageBuffer tile = store.load_tile(rec.tile_id);
    if (tile.width() != manifest.tile_size || tile.height() != manifest.tile_size) {
      throw Error(ErrorCode::BadManifest, "tile " + rec.tile_id + " is not " + std::to_string(manifest.tile_size) +
                                              "x" + std::to_string(manifest.tile_size));
    }
    out.tiles.push_back(std::move(tile));
    out.labels.push_back(rec.label);
    out.ids.push_back(rec.tile_id);
  }
  return out;
}

ordered_json record_to_json(const TileRecord& r) {
  ordered_json j;
  j["tile_id"] = r.tile_id;
  j["source_image"] = r.source_image;
  j["row"] = r.row;
  j["col"] = r.col;
  j["x"] = r.x;
  j["y"] = r.y;
  j["size"] = r.size;
  j["label"] = r.label;
  j["split"] = to_string(r.split);
  j["rejected"] = r.rejected;
  return j;
}

std::string serialize_manifest(const DatasetManifest& manifest) {
  ordered_json header;
  header["schema_version"] = 1;
  ordered_json classes = ordered_json::array();
  for (const auto& c : manifest.classes) classes.push_back({{"id", c.id}, {"name", c.name}});
  header["classes"] = std::move(classes);
  header["seed"] = manifest.seed;
  header["tile_size"] = manifest.tile_size;
  header["overlap_fraction"] = manifest.overlap_fraction;
  header["channel_means"] = manifest.channel_means;

  std::string out = header.dump();
  out += '\n';
  for (const auto& r : manifest.records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

DatasetManifest parse_manifest(std::string_view text) {
  DatasetManifest m;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::unordered_set<std::string> ids;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (!have_header) {
        if (j.at("schema_version").get<int>() != 1) {
          throw Error(ErrorCode::BadManifest, "unsupported manifest schema_version");
        }
        for (const auto& c : j.at("classes")) {
          m.classes.push_back({c.at("id").get<int>(), c.at("name").get<std::string>()});
        }
        for (std::size_t i = 0; i < m.classes.size(); ++i) {
          if (m.classes[i].id != static_cast<int>(i)) {
            throw Error(ErrorCode::BadManifest, "class ids must be contiguous from 0");
          }
        }
        m.seed = j.at("seed").get<std::uint64_t>();
        m.tile_size = j.at("tile_size").get<int>();
        m.overlap_fraction = j.at("overlap_fraction").get<double>();
        m.channel_means = j.at("channel_means").get<std::array<double, 3>>();
        have_header = true;
        continue;
      }
      TileRecord r;
      r.tile_id = j.at("tile_id").get<std::string>();
      r.source_image = j.at("source_image").get<std::string>();
      r.row = j.at("row").get<int>();
      r.col = j.at("col").get<int>();
      r.x = j.at("x").get<int>();
      r.y = j.at("y").get<int>();
      r.size = j.at("size").get<int>();
      r.label = j.at("label").get<int>();
      const auto s = parse_split(j.at("split").get<std::string>());
      if (!s) throw Error(ErrorCode::BadManifest, "unknown split value");
      r.split = *s;
      r.rejected = j.at("rejected").get<bool>();
      if (r.label < 0 || r.label >= static_cast<int>(m.classes.size())) {
        throw Error(ErrorCode::BadManifest, "label out of class table range");
      }
      if (r.rejected && r.split != Split::None) {
        throw Error(ErrorCode::BadManifest, "rejected tile " + r.tile_id + " has a split");
      }
      if (!ids.insert(r.tile_id).second) {
        throw Error(ErrorCode::DuplicateTileId, "duplicate tile id " + r.tile_id);
      }
      m.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadManifest, "line " + std::to_string(line_no) + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DuplicateTileId) throw;
    throw Error(ErrorCode::BadManifest, "line " + std::to_string(line_no) + ": " + e.detail());
  }
  if (!have_header) throw Error(ErrorCode::BadManifest, "manifest has no header line");
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  const std::string text = serialize_manifest(manifest);
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::Io, "manifest not found: " + path.string());
  const auto bytes = read_file_bytes(path);
  return parse_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::set<std::string> parse_reject_list(std::string_view text) {
  std::set<std::string> ids;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    ids.insert(line.substr(first, last - first + 1));
  }
  return ids;
}

std::set<std::string> read_reject_list(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_reject_list(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string format_reject_list(const std::set<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) {
    out += id;
    out += '\n';
  }
  return out;
}

}  // namespace chopnet
