#include <gtest/gtest.h>

#include <png.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "advad/error.hpp"
#include "advad/image.hpp"
#include "support.hpp"

using namespace advad;
using advad::fixtures::code_of;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "advad_test_image";
  fs::create_directories(dir);
  return dir / name;
}

ImageTensor byte_row(std::vector<double> v) {
  const std::size_t n = v.size();
  return ImageTensor({1, n, 1}, RangeTag::kByte, std::move(v));
}

}  // namespace

TEST(RangeTransform, Endpoints) {
  const ImageTensor u = to_unit_range(byte_row({0.0, 255.0, 127.5}));
  EXPECT_EQ(u.range(), RangeTag::kUnit);
  EXPECT_EQ(u[0], -1.0);
  EXPECT_EQ(u[1], 1.0);
  EXPECT_EQ(u[2], 0.0);
  const ImageTensor b = to_byte_range(ImageTensor({1, 2, 1}, RangeTag::kUnit, {-1.0, 1.0}));
  EXPECT_EQ(b[0], 0.0);
  EXPECT_EQ(b[1], 255.0);
}

TEST(RangeTransform, NoClampOnByteSide) {
  const ImageTensor b = to_byte_range(ImageTensor({1, 2, 1}, RangeTag::kUnit, {-1.02, 1.05}));
  EXPECT_LT(b[0], 0.0);
  EXPECT_GT(b[1], 255.0);
}

TEST(RangeTransform, WrongTag) {
  EXPECT_EQ(code_of([] { to_unit_range(ImageTensor({1, 1, 1}, RangeTag::kUnit)); }), ErrorCode::kWrongRangeTag);
  EXPECT_EQ(code_of([] { to_byte_range(ImageTensor({1, 1, 1}, RangeTag::kByte)); }), ErrorCode::kWrongRangeTag);
}

TEST(RangeTransform, RoundTripProperty) {
  const ImageTensor img = fixtures::random_byte_image({16, 16, 3}, 11, false);
  const ImageTensor back = to_byte_range(to_unit_range(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back[i], img[i], 1e-5);
  const ImageTensor unit({1, 500, 1}, RangeTag::kUnit, fixtures::random_vector(500, 12));
  const ImageTensor back_u = to_unit_range(to_byte_range(unit));
  for (std::size_t i = 0; i < unit.size(); ++i) {
    EXPECT_LE(std::abs(back_u[i] - unit[i]), 4 * std::numeric_limits<double>::epsilon());
  }
}

TEST(Quantize, Examples) {
  const ImageTensor q = quantize_8bit(byte_row({13.4, -0.2, 255.7, 13.5, 254.5}));
  EXPECT_EQ(q[0], 13.0);
  EXPECT_EQ(q[1], 0.0);
  EXPECT_EQ(q[2], 255.0);
  EXPECT_EQ(q[3], 14.0);
  EXPECT_EQ(q[4], 255.0);
}

TEST(Quantize, GridMatchesScalarOracle) {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -1.0 + 257.0 * static_cast<double>(i) / 999.0;
  const ImageTensor q = quantize_8bit(byte_row(v));
  for (std::size_t i = 0; i < v.size(); ++i) {
    double want = std::floor(v[i] + 0.5);  // half away from zero for non-negative values
    if (v[i] < 0) want = 0.0;
    want = std::min(255.0, std::max(0.0, want));
    EXPECT_EQ(q[i], want) << v[i];
  }
}

TEST(Quantize, Idempotent) {
  const ImageTensor img = fixtures::random_byte_image({8, 8, 3}, 5, false);
  const ImageTensor q = quantize_8bit(img);
  EXPECT_EQ(quantize_8bit(q), q);
}

TEST(RawFloat, ZeroTensorLayout) {
  const fs::path p = temp_path("zeros.advf");
  write_raw_float(ImageTensor({2, 2, 3}, RangeTag::kUnit), p);
  EXPECT_EQ(fs::file_size(p), 20u + 48u);
  std::ifstream in(p, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(std::memcmp(bytes.data(), "ADVF", 4), 0);
  const unsigned char header[16] = {1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0};
  EXPECT_EQ(std::memcmp(bytes.data() + 4, header, 16), 0);
  for (std::size_t i = 20; i < bytes.size(); ++i) EXPECT_EQ(bytes[i], 0);
}

TEST(RawFloat, BitExactRoundTrip) {
  std::mt19937 rng(7);
  std::vector<double> v(5 * 7 * 3);
  for (auto& x : v) {
    std::uint32_t bits = rng();
    float f;
    std::memcpy(&f, &bits, 4);
    if (!std::isfinite(f)) f = 1.5f;
    x = f;
  }
  const ImageTensor img({5, 7, 3}, RangeTag::kUnit, v);
  const fs::path p = temp_path("rand.advf");
  write_raw_float(img, p);
  const ImageTensor back = read_raw_float(p);
  ASSERT_EQ(back.shape(), img.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const float a = static_cast<float>(v[i]), b = static_cast<float>(back[i]);
    EXPECT_EQ(std::memcmp(&a, &b, 4), 0);
  }
  EXPECT_EQ(read_raw_float(p, RangeTag::kByte).range(), RangeTag::kByte);
}

TEST(RawFloat, MalformedFiles) {
  const fs::path p = temp_path("bad.advf");
  write_raw_float(ImageTensor({2, 2, 3}, RangeTag::kUnit), p);
  fs::resize_file(p, 30);
  EXPECT_EQ(code_of([&] { read_raw_float(p); }), ErrorCode::kMalformedHeader);
  fs::resize_file(p, 10);
  EXPECT_EQ(code_of([&] { read_raw_float(p); }), ErrorCode::kMalformedHeader);
  {
    std::ofstream out(p, std::ios::binary);
    out << "XXXX0000000000000000";
  }
  EXPECT_EQ(code_of([&] { read_raw_float(p); }), ErrorCode::kMalformedHeader);
  EXPECT_EQ(code_of([] { read_raw_float(temp_path("missing.advf")); }), ErrorCode::kIo);
}

TEST(Png, WhitePixel) {
  const fs::path p = temp_path("white.png");
  write_png(ImageTensor({1, 1, 3}, RangeTag::kByte, {255, 255, 255}), p);
  const ImageTensor img = read_png(p);
  EXPECT_EQ(img.shape(), (Shape{1, 1, 3}));
  EXPECT_EQ(img[0], 255.0);
  EXPECT_EQ(img[1], 255.0);
  EXPECT_EQ(img[2], 255.0);
}

TEST(Png, LosslessRoundTrip) {
  for (std::size_t c : {1u, 3u}) {
    const ImageTensor img = fixtures::random_byte_image({9, 13, c}, 21 + c);
    const fs::path p = temp_path("rt" + std::to_string(c) + ".png");
    write_png(img, p);
    EXPECT_EQ(read_png(p), img);
  }
}

TEST(Png, RejectsSixteenBit) {
  const fs::path p = temp_path("deep.png");
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = 2;
  image.height = 2;
  image.format = PNG_FORMAT_LINEAR_Y;
  const std::uint16_t pixels[4] = {0, 1000, 40000, 65535};
  ASSERT_TRUE(png_image_write_to_file(&image, p.c_str(), 0, pixels, 0, nullptr));
  EXPECT_EQ(code_of([&] { read_png(p); }), ErrorCode::kUnsupportedFormat);
}

TEST(Png, WriteValidation) {
  const fs::path p = temp_path("x.png");
  EXPECT_EQ(code_of([&] { write_png(ImageTensor({1, 1, 3}, RangeTag::kUnit), p); }), ErrorCode::kWrongRangeTag);
  EXPECT_EQ(code_of([&] { write_png(ImageTensor({1, 1, 2}, RangeTag::kByte), p); }), ErrorCode::kUnsupportedFormat);
  EXPECT_THROW(write_png(ImageTensor({1, 1, 1}, RangeTag::kByte, {3.5}), p), Error);
  EXPECT_EQ(code_of([] { read_png(temp_path("nope.png")); }), ErrorCode::kIo);
}

TEST(MaxAbsDiff, Basic) {
  const std::vector<double> a{1, 2, 3}, b{1, 5, 2};
  EXPECT_EQ(max_abs_diff(a, b), 3.0);
  const std::vector<double> c{1};
  EXPECT_THROW(max_abs_diff(a, c), Error);
}
