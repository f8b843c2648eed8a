#include <gtest/gtest.h>

#include <cstdint>
#include <vector>

#include "chopnet/image.hpp"
#include "expect_error.hpp"
#include "test_support.hpp"

namespace chopnet {
namespace {

using testing::expect_error;

// 2x2 16-bit greyscale PNG.
const std::vector<std::uint8_t> k16BitPng = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52, 0x00,
    0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x02, 0x10, 0x00, 0x00, 0x00, 0x00, 0x07, 0x4d, 0x8e, 0xbb, 0x00,
    0x00, 0x00, 0x12, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x64, 0x7e, 0xc1, 0xf2, 0x82, 0x85, 0xe3,
    0x02, 0xcb, 0x0b, 0x00, 0x10, 0x8f, 0x03, 0xa1, 0x40, 0xc3, 0x3e, 0x5a, 0x00, 0x00, 0x00, 0x00, 0x49,
    0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};

// 2x1 8-bit grey + alpha PNG, grey 100, alpha 50.
const std::vector<std::uint8_t> kGreyAlphaPng = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52, 0x00, 0x00,
    0x00, 0x02, 0x00, 0x00, 0x00, 0x01, 0x08, 0x04, 0x00, 0x00, 0x00, 0x5e, 0x2b, 0xb7, 0x01, 0x00, 0x00, 0x00,
    0x0d, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x4c, 0x31, 0x62, 0x60, 0x00, 0x00, 0x02, 0x30, 0x00, 0x98,
    0xd6, 0xe1, 0x30, 0x46, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};

TEST(ImageBuffer, CropAndPaste) {
  const ImageBuffer img = testing::random_image(20, 10, 1);
  const ImageBuffer c = img.crop(3, 2, 5, 4);
  ASSERT_EQ(c.width(), 5);
  ASSERT_EQ(c.height(), 4);
  EXPECT_EQ(c.at(0, 0), img.at(3, 2));
  EXPECT_EQ(c.at(4, 3), img.at(7, 5));
  ImageBuffer blank(20, 10);
  blank.paste(c, 3, 2);
  EXPECT_EQ(blank.crop(3, 2, 5, 4), c);
  expect_error(ErrorCode::GridMismatch, [&] { img.crop(18, 0, 5, 5); });
  expect_error(ErrorCode::GridMismatch, [&] { blank.paste(c, 17, 0); });
}

TEST(ImageBuffer, RejectsBadDimensions) {
  expect_error(ErrorCode::UnsupportedImage, [] { ImageBuffer(0, 5); });
  expect_error(ErrorCode::UnsupportedImage, [] { ImageBuffer(2, 2, std::vector<std::uint8_t>(11)); });
}

TEST(Png, RoundTripIsLossless) {
  const ImageBuffer img = testing::random_image(33, 17, 2);
  EXPECT_EQ(decode_image(encode_png(img)), img);
}

TEST(Png, SaveAndLoad) {
  testing::TempDir dir;
  const ImageBuffer img = testing::random_image(8, 9, 3);
  save_png(img, dir / "a.png");
  EXPECT_EQ(load_image(dir / "a.png"), img);
}

TEST(Png, GreyscaleExpandsToRgb) {
  const ImageBuffer img = decode_image(kGreyAlphaPng);
  ASSERT_EQ(img.width(), 2);
  ASSERT_EQ(img.height(), 1);
  const Rgb p = img.at(0, 0);
  EXPECT_EQ(p.r, p.g);
  EXPECT_EQ(p.g, p.b);
}

TEST(Png, SixteenBitRejected) {
  const auto msg = expect_error(ErrorCode::UnsupportedImage, [] { decode_image(k16BitPng); });
  EXPECT_NE(msg.find("16-bit"), std::string::npos);
}

TEST(Jpeg, DetectedByContentNotExtension) {
  testing::TempDir dir;
  ImageBuffer img(16, 16, Rgb{200, 40, 40});
  const auto bytes = encode_jpeg(img, 95);
  write_file_bytes(dir / "looks_like.png", bytes);
  const ImageBuffer back = load_image(dir / "looks_like.png");
  ASSERT_EQ(back.width(), 16);
  ASSERT_EQ(back.height(), 16);
  const Rgb p = back.at(8, 8);
  EXPECT_NEAR(p.r, 200, 6);
  EXPECT_NEAR(p.g, 40, 6);
  EXPECT_NEAR(p.b, 40, 6);
}

TEST(Decode, GarbageAndTruncation) {
  const std::vector<std::uint8_t> junk = {'h', 'e', 'l', 'l', 'o'};
  expect_error(ErrorCode::UnsupportedImage, [&] { decode_image(junk); });
  auto png = encode_png(testing::random_image(10, 10, 4));
  png.resize(png.size() / 2);
  expect_error(ErrorCode::UnsupportedImage, [&] { decode_image(png); });
  auto jpg = encode_jpeg(testing::random_image(10, 10, 4));
  jpg.resize(20);
  expect_error(ErrorCode::UnsupportedImage, [&] { decode_image(jpg); });
}

TEST(LoadImage, MissingFileNamesPath) {
  const auto msg = expect_error(ErrorCode::Io, [] { load_image("/nonexistent/x.png"); });
  EXPECT_NE(msg.find("/nonexistent/x.png"), std::string::npos);
}

}  // namespace
}  // namespace chopnet
