#include "chopnet/error.hpp"

namespace chopnet {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::InvalidOverlap: return "InvalidOverlap";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::IndexOutOfGrid: return "IndexOutOfGrid";
    case ErrorCode::UnsupportedImage: return "UnsupportedImage";
    case ErrorCode::DuplicateTileId: return "DuplicateTileId";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DegenerateClass: return "DegenerateClass";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::BadManifest: return "BadManifest";
    case ErrorCode::InvalidArchitecture: return "InvalidArchitecture";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::ArchMismatch: return "ArchMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EpochOutOfRange: return "EpochOutOfRange";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::RegionOutOfBounds: return "RegionOutOfBounds";
    case ErrorCode::BadPredictions: return "BadPredictions";
    case ErrorCode::BadPagination: return "BadPagination";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace chopnet
