#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "chopnet/dataset.hpp"

namespace chopnet {

struct CurationDecision {
  std::string tile_id;
  bool rejected = false;
  std::string timestamp;  // UTC, ISO-8601
};

struct TilePage {
  std::vector<TileRecord> records;
  std::size_t total = 0;
  std::size_t offset = 0;
  std::size_t limit = 0;
};

inline constexpr std::size_t kMaxPageLimit = 1000;

/// Manifest state plus the curator's keep/reject decisions. Decisions are
/// appended to {dataset_dir}/curation.log and replayed on construction; the
/// latest decision per tile wins. Tile pixel files are never modified.
/// Reads may run concurrently; decisions are serialized.
class CurationStore {
 public:
  explicit CurationStore(const std::filesystem::path& dataset_dir);
  ~CurationStore();

  CurationStore(const CurationStore&) = delete;
  CurationStore& operator=(const CurationStore&) = delete;

  const std::vector<ClassLabel>& classes() const noexcept { return base_.classes; }

  /// Ordered by tile_id. Throws BadPagination unless 1 <= limit <= 1000.
  TilePage list_tiles(std::size_t offset, std::size_t limit, std::optional<int> label = std::nullopt,
                      std::optional<bool> rejected = std::nullopt) const;

  std::optional<TileRecord> find(const std::string& tile_id) const;

  /// Stored PNG bytes; NotFound for unknown ids.
  std::vector<std::uint8_t> tile_image(const std::string& tile_id) const;

  /// Durably appends the decision, then applies it. NotFound for unknown ids.
  TileRecord post_decision(const std::string& tile_id, bool rejected);

  /// Currently rejected tile ids, sorted, one per line.
  std::string export_reject_list() const;

  /// The manifest with all decisions applied.
  DatasetManifest effective_manifest() const;

  std::size_t decision_count() const;

 private:
  TileRecord effective(std::size_t index) const;
  void replay_log();

  TileStore store_;
  DatasetManifest base_;
  std::vector<std::size_t> by_id_;                 // record indices sorted by tile_id
  std::map<std::string, std::size_t> index_of_;    // tile_id -> record index
  std::map<std::string, CurationDecision> latest_;
  mutable std::shared_mutex mutex_;
  int log_fd_ = -1;
};

std::string utc_timestamp_now();

}  // namespace chopnet
