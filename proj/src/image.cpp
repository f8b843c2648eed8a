#include "chopnet/image.hpp"

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "chopnet/error.hpp"

namespace chopnet {

ImageBuffer::ImageBuffer(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::UnsupportedImage, "image dimensions must be positive");
  }
  data_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * kChannels);
  for (std::size_t i = 0; i < data_.size(); i += kChannels) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

ImageBuffer::ImageBuffer(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::UnsupportedImage, "image dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * kChannels) {
    throw Error(ErrorCode::UnsupportedImage, "pixel buffer length does not match width*height*3");
  }
}

ImageBuffer ImageBuffer::crop(int x, int y, int width, int height) const {
  if (x < 0 || y < 0 || width < 1 || height < 1 || x + width > width_ || y + height > height_) {
    throw Error(ErrorCode::GridMismatch, "crop rectangle exceeds image bounds");
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * kChannels);
  const std::size_t row_bytes = static_cast<std::size_t>(width) * kChannels;
  for (int r = 0; r < height; ++r) {
    std::memcpy(out.data() + static_cast<std::size_t>(r) * row_bytes, data_.data() + offset(x, y + r), row_bytes);
  }
  return ImageBuffer(width, height, std::move(out));
}

void ImageBuffer::paste(const ImageBuffer& patch, int x, int y) {
  if (x < 0 || y < 0 || x + patch.width() > width_ || y + patch.height() > height_) {
    throw Error(ErrorCode::GridMismatch, "paste rectangle exceeds image bounds");
  }
  const std::size_t row_bytes = static_cast<std::size_t>(patch.width()) * kChannels;
  for (int r = 0; r < patch.height(); ++r) {
    std::memcpy(data_.data() + offset(x, y + r), patch.data_.data() + patch.offset(0, r), row_bytes);
  }
}

namespace {

bool is_png(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return bytes.size() >= 8 && std::memcmp(bytes.data(), kSig, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::UnsupportedImage, std::string("PNG decode failed: ") + img.message);
  }
  if (img.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&img);
    throw Error(ErrorCode::UnsupportedImage, "16-bit PNG input is not supported; convert to 8-bit RGB");
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> data(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, data.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw Error(ErrorCode::UnsupportedImage, "PNG decode failed: " + msg);
  }
  return ImageBuffer(static_cast<int>(img.width), static_cast<int>(img.height), std::move(data));
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  std::longjmp(mgr->jump, 1);
}

ImageBuffer decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.message[0] = '\0';

  // Only trivially destructible locals live between setjmp and longjmp.
  std::vector<std::uint8_t>* data = new std::vector<std::uint8_t>();
  int width = 0;
  int height = 0;
  bool cmyk = false;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    delete data;
    throw Error(ErrorCode::UnsupportedImage, std::string("JPEG decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.jpeg_color_space == JCS_CMYK || cinfo.jpeg_color_space == JCS_YCCK) {
    cmyk = true;
  } else {
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    width = static_cast<int>(cinfo.output_width);
    height = static_cast<int>(cinfo.output_height);
    const std::size_t row_bytes = static_cast<std::size_t>(width) * 3;
    data->resize(row_bytes * static_cast<std::size_t>(height));
    while (cinfo.output_scanline < cinfo.output_height) {
      JSAMPROW row = data->data() + row_bytes * cinfo.output_scanline;
      jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
  }
  jpeg_destroy_decompress(&cinfo);
  std::vector<std::uint8_t> pixels = std::move(*data);
  delete data;
  if (cmyk) {
    throw Error(ErrorCode::UnsupportedImage, "CMYK JPEG input is not supported; convert to RGB");
  }
  return ImageBuffer(width, height, std::move(pixels));
}

}  // namespace

ImageBuffer decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  if (is_jpeg(bytes)) return decode_jpeg(bytes);
  throw Error(ErrorCode::UnsupportedImage, "unrecognized image format (expected PNG or JPEG)");
}

ImageBuffer load_image(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_image(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& image) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.data().data(), 0, nullptr)) {
    throw Error(ErrorCode::Io, std::string("PNG encode failed: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.data().data(), 0, nullptr)) {
    throw Error(ErrorCode::Io, std::string("PNG encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

void save_png(const ImageBuffer& image, const std::filesystem::path& path) {
  write_file_bytes(path, encode_png(image));
}

std::vector<std::uint8_t> encode_jpeg(const ImageBuffer& image, int quality) {
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(image.width());
  cinfo.image_height = static_cast<JDIMENSION>(image.height());
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const std::size_t row_bytes = static_cast<std::size_t>(image.width()) * 3;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<std::uint8_t*>(image.data().data()) + row_bytes * cinfo.next_scanline;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> out(buffer, buffer + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buffer);
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

}  // namespace chopnet
