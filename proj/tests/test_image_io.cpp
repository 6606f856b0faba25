#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "veil/image_io.hpp"
#include "veil/rng.hpp"

using namespace veil;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "veil_img_tests" / name;
  std::filesystem::create_directories(dir);
  return dir;
}

ImageU8 random_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  ImageU8 img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (auto& b : img.rgb) b = static_cast<std::uint8_t>(rng.bounded(256));
  return img;
}

// Frozen vectors produced with an independent zlib implementation.
// v1: repetitive text, level 6; v3: short text, level 1 (fixed Huffman).
const std::vector<std::uint8_t> kZlibV1 = {
    0x78, 0x9c, 0x2b, 0xc9, 0x48, 0x55, 0x28, 0x2c, 0xcd, 0x4c, 0xce,
    0x56, 0x48, 0x2a, 0xca, 0x2f, 0xcf, 0x53, 0x48, 0xcb, 0xaf, 0x50,
    0xc8, 0x2a, 0xcd, 0x2d, 0x28, 0x56, 0xc8, 0x2f, 0x4b, 0x2d, 0x52,
    0x28, 0x01, 0x4a, 0xe7, 0x24, 0x56, 0x55, 0x2a, 0xa4, 0xe4, 0xa7,
    0xeb, 0x81, 0x79, 0x83, 0x40, 0x31, 0x00, 0x32, 0xaf, 0x41, 0x1d};

const std::vector<std::uint8_t> kZlibV3 = {
    0x78, 0x01, 0x4b, 0x4c, 0x04, 0x82, 0x24, 0x10, 0x48, 0x06,
    0x81, 0xc4, 0x24, 0x28, 0x02, 0x00, 0x72, 0xb8, 0x09, 0x31};

// v2: binary ramp (i*7 + (i>>3)) % 256 for i in [0,512), level 9 (dynamic).
const std::vector<std::uint8_t> kZlibV2 = {
    0x78, 0xda, 0x2d, 0xd1, 0x57, 0x34, 0x96, 0x01, 0x00, 0x06, 0xe0, 0x3f,
    0x23, 0x59, 0x51, 0x64, 0x65, 0x14, 0x91, 0x6c, 0x65, 0xfc, 0x92, 0xd5,
    0x32, 0x32, 0x4a, 0x45, 0xd9, 0x44, 0xb2, 0x93, 0x24, 0x91, 0x3d, 0x2a,
    0xca, 0x1e, 0xa1, 0x28, 0x42, 0x13, 0x69, 0x28, 0x23, 0x9b, 0xd0, 0x50,
    0x76, 0x51, 0xb2, 0xb3, 0xb3, 0x47, 0xf8, 0xde, 0x73, 0xdc, 0x3f, 0x77,
    0x0f, 0x89, 0x66, 0xf3, 0x36, 0x6e, 0x01, 0x11, 0x69, 0x05, 0x55, 0x75,
    0xdd, 0xd3, 0x26, 0xe7, 0xec, 0x2f, 0x79, 0xfa, 0x85, 0xde, 0x89, 0x4b,
    0x49, 0x7f, 0xfa, 0xf2, 0x5d, 0x69, 0xcd, 0xe7, 0xe6, 0x9f, 0xbd, 0xc3,
    0xff, 0x16, 0x48, 0x84, 0xe1, 0xd9, 0x25, 0xba, 0x17, 0xc6, 0xc0, 0xd4,
    0xda, 0x01, 0x26, 0x22, 0xfe, 0x5e, 0x06, 0x4c, 0xed, 0x97, 0x96, 0x4e,
    0x98, 0x0d, 0x9b, 0x98, 0xd8, 0x60, 0xf6, 0xab, 0x69, 0xe8, 0xc1, 0xb8,
    0x5d, 0xf3, 0xbf, 0x01, 0xf3, 0x2c, 0xff, 0x7d, 0x19, 0x4c, 0xdf, 0xc8,
    0xd4, 0x22, 0x0c, 0xaf, 0xa0, 0xd8, 0x3e, 0x18, 0x43, 0x33, 0x1b, 0x47,
    0x98, 0xc8, 0x84, 0xfb, 0x8f, 0x60, 0x3e, 0x7e, 0x6d, 0xed, 0x82, 0xa1,
    0xa0, 0x65, 0x66, 0x87, 0x51, 0x3c, 0xa8, 0x79, 0x1c, 0xe6, 0xb2, 0x57,
    0xc0, 0x4d, 0x98, 0xe7, 0xaf, 0x0a, 0xcb, 0x61, 0xfa, 0x47, 0xa7, 0x97,
    0x60, 0xf8, 0x84, 0xc4, 0x65, 0x60, 0xce, 0x98, 0x9f, 0x77, 0x82, 0x89,
    0x4a, 0x4c, 0xcd, 0x84, 0xa9, 0x6b, 0x6c, 0xfb, 0x05, 0x43, 0x49, 0xb7,
    0x85, 0x03, 0xe6, 0xc0, 0x21, 0xad, 0x13, 0x30, 0xee, 0xde, 0x81, 0xb7,
    0x60, 0x5e, 0xbc, 0x2e, 0xaa, 0x80, 0x19, 0x18, 0x9b, 0x59, 0x86, 0xd9,
    0xb1, 0x5b, 0x42, 0x16, 0xe6, 0xac, 0x85, 0xad, 0x33, 0x4c, 0xf4, 0xdd,
    0xb4, 0x2c, 0x98, 0xfa, 0x6f, 0xed, 0xbf, 0x61, 0xa8, 0xe8, 0xb7, 0x72,
    0xc2, 0x28, 0x1d, 0x3e, 0xa6, 0x0f, 0x73, 0xe5, 0x7a, 0x50, 0x18, 0x4c,
    0xce, 0x9b, 0xe2, 0x4a, 0x98, 0xc1, 0xf1, 0xd9, 0xff, 0x30, 0x3b, 0x85,
    0x25, 0xe5, 0x60, 0x8c, 0x2c, 0x2f, 0xb8, 0xc0, 0xc4, 0x24, 0x3d, 0xc8,
    0x86, 0x69, 0xf8, 0xde, 0xd1, 0x0d, 0x43, 0xcd, 0xc0, 0xc2, 0x05, 0xa3,
    0x7c, 0x44, 0xfb, 0x24, 0x8c, 0x87, 0x4f, 0x70, 0x38, 0x4c, 0xee, 0xdb,
    0x92, 0x2a, 0x98, 0xa1, 0x89, 0xb9, 0x15, 0x18, 0xfe, 0x3d, 0x52, 0xf2,
    0x30, 0xc6, 0x56, 0x76, 0x17, 0x61, 0x62, 0x93, 0x1f, 0x3e, 0x86, 0xf9,
    0xd4, 0xf4, 0xe3, 0x0f, 0xcc, 0x46, 0x46, 0xd6, 0xed, 0x30, 0x2a, 0x47,
    0x75, 0x4e, 0xc1, 0x5c, 0xf5, 0x0d, 0xb9, 0x0d, 0x93, 0x57, 0xf0, 0xa1,
    0x1a, 0xe6, 0xef, 0xe4, 0xfc, 0x2a, 0x0c, 0x51, 0x4a, 0x86, 0x21, 0x4a,
    0x5d, 0x61, 0x88, 0xd2, 0x27, 0x30, 0x44, 0x69, 0x0f, 0xcc, 0x7a, 0x3b,
    0x79, 0x0d, 0x58, 0xf9, 0xfc, 0x01};

// A 6x5 RGB PNG using filter types 0..4 on successive scanlines, encoded
// with an independent zlib; expected pixels follow.
const std::vector<std::uint8_t> kFilteredPng = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d,
    0x49, 0x48, 0x44, 0x52, 0x00, 0x00, 0x00, 0x06, 0x00, 0x00, 0x00, 0x05,
    0x08, 0x02, 0x00, 0x00, 0x00, 0xe9, 0x3a, 0x0a, 0xb1, 0x00, 0x00, 0x00,
    0x38, 0x49, 0x44, 0x41, 0x54, 0x78, 0xda, 0x63, 0x60, 0x60, 0x60, 0x50,
    0x65, 0x4d, 0xf5, 0xe2, 0x3a, 0x95, 0xcf, 0xaf, 0x3f, 0x45, 0x64, 0xca,
    0x4e, 0xc9, 0x9f, 0x8c, 0xdc, 0x9e, 0xcc, 0x40, 0x21, 0x64, 0xc4, 0x04,
    0x14, 0x42, 0x43, 0xcc, 0x62, 0x93, 0xd8, 0x24, 0xd4, 0x4d, 0xc0, 0x68,
    0x0b, 0x84, 0xc1, 0x02, 0x92, 0x61, 0x45, 0x41, 0x00, 0x56, 0x6e, 0x0e,
    0xbb, 0xff, 0x96, 0xd2, 0x6d, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e,
    0x44, 0xae, 0x42, 0x60, 0x82};

const std::vector<std::uint8_t> kFilteredPngPixels = {
    0x00, 0x00, 0x00, 0x25, 0x05, 0x65, 0x4a, 0x0a, 0xca, 0x6f, 0x0f, 0x2f,
    0x94, 0x14, 0x94, 0xb9, 0x19, 0xf9, 0x0b, 0x49, 0x03, 0x30, 0x4e, 0x68,
    0x55, 0x53, 0xcd, 0x7a, 0x58, 0x32, 0x9f, 0x5d, 0x97, 0xc4, 0x62, 0xfc,
    0x16, 0x92, 0x06, 0x3b, 0x97, 0x6b, 0x60, 0x9c, 0xd0, 0x85, 0xa1, 0x35,
    0xaa, 0xa6, 0x9a, 0xcf, 0xab, 0xff, 0x21, 0xdb, 0x09, 0x46, 0xe0, 0x6e,
    0x6b, 0xe5, 0xd3, 0x90, 0xea, 0x38, 0xb5, 0xef, 0x9d, 0xda, 0xf4, 0x02,
    0x2c, 0x24, 0x0c, 0x51, 0x29, 0x71, 0x76, 0x2e, 0xd6, 0x9b, 0x33, 0x3b,
    0xc0, 0x38, 0xa0, 0xe5, 0x3d, 0x05};

}  // namespace

TEST_CASE("inflate reproduces zlib streams from an independent encoder") {
  const std::string text =
      "the quick brown fox jumps over the lazy dog. ";
  std::string want1;
  for (int i = 0; i < 4; ++i) want1 += text;
  auto got1 = detail::zlib_decompress(kZlibV1.data(), kZlibV1.size());
  CHECK(std::string(got1.begin(), got1.end()) == want1);

  auto got3 = detail::zlib_decompress(kZlibV3.data(), kZlibV3.size());
  CHECK(std::string(got3.begin(), got3.end()) == "aaaaabbbbbcccccabcabcabc");

  auto got2 = detail::zlib_decompress(kZlibV2.data(), kZlibV2.size());
  REQUIRE(got2.size() == 512);
  for (int i = 0; i < 512; ++i)
    CHECK(got2[static_cast<std::size_t>(i)] ==
          static_cast<std::uint8_t>((i * 7 + (i >> 3)) % 256));
}

TEST_CASE("inflate round-trips our stored-block encoder") {
  Rng rng(99);
  std::vector<std::uint8_t> data(150000);
  for (auto& b : data) b = static_cast<std::uint8_t>(rng.bounded(256));
  auto z = detail::zlib_compress_stored(data.data(), data.size());
  auto back = detail::zlib_decompress(z.data(), z.size(), data.size());
  CHECK(back == data);
}

TEST_CASE("inflate rejects corrupted streams") {
  auto corrupt = kZlibV1;
  corrupt[20] ^= 0xFF;
  CHECK_THROWS_AS(detail::zlib_decompress(corrupt.data(), corrupt.size()),
                  IoError);
  auto truncated = std::vector<std::uint8_t>(kZlibV2.begin(),
                                             kZlibV2.begin() + 40);
  CHECK_THROWS_AS(detail::zlib_decompress(truncated.data(), truncated.size()),
                  IoError);
}

TEST_CASE("ppm round-trip is exact") {
  const auto dir = temp_dir("ppm");
  const auto img = random_image(13, 7, 4);
  const auto path = (dir / "a.ppm").string();
  write_ppm(img, path);
  const auto back = read_ppm(path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.rgb == img.rgb);
}

TEST_CASE("ppm rejects malformed headers") {
  const auto dir = temp_dir("ppm_bad");
  {
    std::ofstream f(dir / "bad.ppm", std::ios::binary);
    f << "P3\n2 2\n255\n";
  }
  CHECK_THROWS_AS(read_ppm((dir / "bad.ppm").string()), IoError);
  {
    std::ofstream f(dir / "short.ppm", std::ios::binary);
    f << "P6\n4 4\n255\nxx";
  }
  CHECK_THROWS_AS(read_ppm((dir / "short.ppm").string()), IoError);
}

TEST_CASE("png round-trip is exact") {
  const auto dir = temp_dir("png");
  const auto img = random_image(32, 32, 12);
  const auto path = (dir / "a.png").string();
  write_png(img, path);
  const auto back = read_png(path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.rgb == img.rgb);
}

TEST_CASE("png decoder handles all five filter types from a foreign encoder") {
  const auto dir = temp_dir("png_foreign");
  const auto path = (dir / "filtered.png").string();
  detail::write_file_bytes(path, kFilteredPng);
  const auto img = read_png(path);
  CHECK(img.width == 6);
  CHECK(img.height == 5);
  CHECK(img.rgb == kFilteredPngPixels);
}

TEST_CASE("png decoder rejects corrupted chunks") {
  const auto dir = temp_dir("png_bad");
  auto bad = kFilteredPng;
  bad[50] ^= 0x01;  // flip a bit inside IDAT
  const auto path = (dir / "bad.png").string();
  detail::write_file_bytes(path, bad);
  CHECK_THROWS_AS(read_png(path), IoError);
}

TEST_CASE("quantize/dequantize stays within 8-bit error") {
  Rng rng(5);
  Tensor<float> img({3, 8, 8});
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<float>(rng.uniform());
  const auto q = quantize_image(img);
  const auto back = dequantize_image(q);
  REQUIRE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i)
    CHECK(std::fabs(back[i] - img[i]) <= 1.0f / 255.0f);
}

TEST_CASE("read_image dispatches on magic bytes") {
  const auto dir = temp_dir("dispatch");
  const auto img = random_image(5, 5, 77);
  write_ppm(img, (dir / "x.ppm").string());
  write_png(img, (dir / "x.png").string());
  CHECK(read_image((dir / "x.ppm").string()).rgb == img.rgb);
  CHECK(read_image((dir / "x.png").string()).rgb == img.rgb);
  {
    std::ofstream f(dir / "junk.bin", std::ios::binary);
    f << "zz";
  }
  CHECK_THROWS_AS(read_image((dir / "junk.bin").string()), IoError);
}
