#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "chopnet/curation.hpp"

namespace chopnet {

/// HTTP/JSON facade over a CurationStore.
///
///   GET  /api/classes
///   GET  /api/tiles?offset=&limit=&label=&rejected=
///   GET  /api/tiles/{id}/image
///   POST /api/tiles/{id}/decision   {"rejected": true|false}
///   GET  /api/export/rejects
///
/// Errors are JSON {error, message}: 404 for unknown tiles, 400 for bad
/// pagination or malformed requests. When `ui_dir` is given its files are
/// served at /.
class CurationServer {
 public:
  CurationServer(CurationStore& store, std::optional<std::filesystem::path> ui_dir = std::nullopt);
  ~CurationServer();

  CurationServer(const CurationServer&) = delete;
  CurationServer& operator=(const CurationServer&) = delete;

  /// Binds without serving. Port 0 picks a free port. Returns the bound
  /// port; throws Io if the address is unavailable.
  int bind(const std::string& host, int port);

  /// Serves on the bound socket until stop() is called.
  void run();

  /// Safe to call from another thread.
  void stop();

  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace chopnet
