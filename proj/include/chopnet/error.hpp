#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chopnet {

enum class ErrorCode {
  // tile_engine
  ImageTooSmall,
  InvalidOverlap,
  GridMismatch,
  IndexOutOfGrid,
  UnsupportedImage,
  // dataset_builder
  DuplicateTileId,
  EmptyDataset,
  DegenerateClass,
  UnknownLabel,
  BadManifest,
  // neural_net
  InvalidArchitecture,
  ShapeMismatch,
  LabelOutOfRange,
  NonFinite,
  BadMagic,
  UnsupportedVersion,
  TruncatedFile,
  CorruptCheckpoint,
  ArchMismatch,
  // trainer
  InvalidConfig,
  EpochOutOfRange,
  NonFiniteLoss,
  // mosaic_classifier
  EmptyRegion,
  RegionOutOfBounds,
  BadPredictions,
  // curation_service
  BadPagination,
  NotFound,
  // generic
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for every recoverable failure in the library.
/// The code identifies the failure class; what() carries the detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace chopnet
