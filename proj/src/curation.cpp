#include "chopnet/curation.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "chopnet/error.hpp"

namespace chopnet {

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

CurationStore::CurationStore(const std::filesystem::path& dataset_dir) : store_(dataset_dir) {
  if (!std::filesystem::exists(store_.manifest_path())) {
    throw Error(ErrorCode::Io, "no manifest at " + store_.manifest_path().string());
  }
  base_ = read_manifest(store_.manifest_path());
  by_id_.resize(base_.records.size());
  for (std::size_t i = 0; i < base_.records.size(); ++i) {
    by_id_[i] = i;
    index_of_.emplace(base_.records[i].tile_id, i);
  }
  std::sort(by_id_.begin(), by_id_.end(),
            [this](std::size_t a, std::size_t b) { return base_.records[a].tile_id < base_.records[b].tile_id; });
  replay_log();
  log_fd_ = ::open(store_.curation_log_path().c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (log_fd_ < 0) {
    throw Error(ErrorCode::Io, "cannot open decision log " + store_.curation_log_path().string() + ": " +
                                   std::strerror(errno));
  }
  // Terminate a torn final line so the next decision starts on its own line.
  if (const auto size = std::filesystem::exists(store_.curation_log_path())
                            ? std::filesystem::file_size(store_.curation_log_path())
                            : 0;
      size > 0) {
    std::ifstream in(store_.curation_log_path(), std::ios::binary);
    in.seekg(static_cast<std::streamoff>(size - 1));
    if (in.get() != '\n' && ::write(log_fd_, "\n", 1) != 1) {
      throw Error(ErrorCode::Io, std::string("decision log write failed: ") + std::strerror(errno));
    }
  }
}

CurationStore::~CurationStore() {
  if (log_fd_ >= 0) {
    ::fsync(log_fd_);
    ::close(log_fd_);
  }
}

void CurationStore::replay_log() {
  std::ifstream in(store_.curation_log_path());
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // A torn final line from an interrupted write is skipped.
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;
    if (!j.contains("tile_id") || !j.contains("rejected") || !j["tile_id"].is_string() || !j["rejected"].is_boolean()) {
      continue;
    }
    CurationDecision d;
    d.tile_id = j["tile_id"].get<std::string>();
    d.rejected = j["rejected"].get<bool>();
    d.timestamp = j.value("timestamp", "");
    if (!index_of_.count(d.tile_id)) continue;
    latest_[d.tile_id] = std::move(d);
  }
}

TileRecord CurationStore::effective(std::size_t index) const {
  TileRecord r = base_.records[index];
  if (const auto it = latest_.find(r.tile_id); it != latest_.end()) {
    const bool was_rejected = r.rejected;
    r.rejected = it->second.rejected;
    if (r.rejected || was_rejected) r.split = Split::None;
  }
  return r;
}

TilePage CurationStore::list_tiles(std::size_t offset, std::size_t limit, std::optional<int> label,
                                   std::optional<bool> rejected) const {
  if (limit < 1 || limit > kMaxPageLimit) {
    throw Error(ErrorCode::BadPagination, "limit must be in [1, " + std::to_string(kMaxPageLimit) + "], got " +
                                              std::to_string(limit));
  }
  std::shared_lock lock(mutex_);
  TilePage page;
  page.offset = offset;
  page.limit = limit;
  for (const std::size_t i : by_id_) {
    if (label && base_.records[i].label != *label) continue;
    TileRecord r = effective(i);
    if (rejected && r.rejected != *rejected) continue;
    if (page.total >= offset && page.records.size() < limit) page.records.push_back(std::move(r));
    ++page.total;
  }
  return page;
}

std::optional<TileRecord> CurationStore::find(const std::string& tile_id) const {
  std::shared_lock lock(mutex_);
  const auto it = index_of_.find(tile_id);
  if (it == index_of_.end()) return std::nullopt;
  return effective(it->second);
}

std::vector<std::uint8_t> CurationStore::tile_image(const std::string& tile_id) const {
  if (!index_of_.count(tile_id)) throw Error(ErrorCode::NotFound, "unknown tile '" + tile_id + "'");
  return store_.tile_bytes(tile_id);
}

TileRecord CurationStore::post_decision(const std::string& tile_id, bool rejected) {
  std::unique_lock lock(mutex_);
  const auto it = index_of_.find(tile_id);
  if (it == index_of_.end()) throw Error(ErrorCode::NotFound, "unknown tile '" + tile_id + "'");

  CurationDecision d{tile_id, rejected, utc_timestamp_now()};
  nlohmann::ordered_json j;
  j["tile_id"] = d.tile_id;
  j["rejected"] = d.rejected;
  j["timestamp"] = d.timestamp;
  const std::string line = j.dump() + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(log_fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::Io, std::string("decision log write failed: ") + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(log_fd_) != 0) throw Error(ErrorCode::Io, std::string("decision log fsync failed: ") + std::strerror(errno));

  latest_[tile_id] = std::move(d);
  return effective(it->second);
}

std::string CurationStore::export_reject_list() const {
  std::shared_lock lock(mutex_);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < base_.records.size(); ++i) {
    if (effective(i).rejected) ids.insert(base_.records[i].tile_id);
  }
  return format_reject_list(ids);
}

DatasetManifest CurationStore::effective_manifest() const {
  std::shared_lock lock(mutex_);
  DatasetManifest m = base_;
  for (std::size_t i = 0; i < m.records.size(); ++i) m.records[i] = effective(i);
  return m;
}

std::size_t CurationStore::decision_count() const {
  std::shared_lock lock(mutex_);
  return latest_.size();
}

}  // namespace chopnet
