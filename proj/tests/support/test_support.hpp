#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "chopnet/dataset.hpp"
#include "chopnet/image.hpp"
#include "chopnet/network.hpp"
#include "chopnet/tile_engine.hpp"

namespace chopnet::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "chopnet");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

ImageBuffer random_image(int width, int height, std::uint64_t seed);

/// Procedural textures standing in for the four moss classes. Classes 0 and
/// 1 share a palette and differ only in spatial frequency, so colour alone
/// cannot separate them.
ImageBuffer texture(int texture_class, int width, int height, std::uint64_t seed);

/// One texture per quadrant: 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right.
ImageBuffer quadrant_composite(int size, std::uint64_t seed);

/// Origins enumerated the slow way: every x with x % stride == 0 and x + S <= W.
std::vector<PixelPoint> brute_force_origins(int width, int height, int tile_size, int stride);

/// Writes one texture source per class into `dir` and returns them labeled.
std::vector<SourceImage> write_texture_sources(const std::filesystem::path& dir, int side, std::uint64_t seed);

struct GradCheckStats {
  double max_rel_error = 0.0;
  std::string worst;          // "layer[index]"
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

/// Central-difference check of compute_gradients over every parameter.
/// Entries whose perturbation flips a pooling winner or a ReLU sign are
/// counted as kinks and skipped; the error is |a - n| / max(|a|, |n|, floor).
GradCheckStats gradient_check(const NetworkParams<double>& params, const Tensor<double>& batch,
                              const std::vector<int>& labels, double h, double floor);

}  // namespace chopnet::testing
