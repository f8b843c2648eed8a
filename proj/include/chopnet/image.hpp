#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace chopnet {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Interleaved 8-bit RGB raster, row-major. The only pixel model the
/// pipeline accepts; grayscale and palette inputs are expanded on load.
class ImageBuffer {
 public:
  static constexpr int kChannels = 3;

  ImageBuffer() = default;
  ImageBuffer(int width, int height, Rgb fill = {});
  ImageBuffer(int width, int height, std::vector<std::uint8_t> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return kChannels; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  Rgb at(int x, int y) const noexcept {
    const std::size_t i = offset(x, y);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set(int x, int y, Rgb c) noexcept {
    const std::size_t i = offset(x, y);
    data_[i] = c.r;
    data_[i + 1] = c.g;
    data_[i + 2] = c.b;
  }

  /// Copy of the width x height rectangle with top-left corner (x, y).
  /// The rectangle must lie entirely inside the image.
  ImageBuffer crop(int x, int y, int width, int height) const;

  /// Writes `patch` with its top-left corner at (x, y); must fit.
  void paste(const ImageBuffer& patch, int x, int y);

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * kChannels;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// PNG and JPEG are detected from the leading bytes, not the extension.
// 16-bit and CMYK inputs throw UnsupportedImage.
ImageBuffer load_image(const std::filesystem::path& path);
ImageBuffer decode_image(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_png(const ImageBuffer& image);
void save_png(const ImageBuffer& image, const std::filesystem::path& path);

// Used only by tests and tooling that need a lossy source; decoding
// results are decoder-dependent.
std::vector<std::uint8_t> encode_jpeg(const ImageBuffer& image, int quality = 90);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace chopnet
