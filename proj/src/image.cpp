#include "advad/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "advad/error.hpp"

namespace advad {

namespace {

constexpr std::array<char, 4> kRawMagic = {'A', 'D', 'V', 'F'};
constexpr std::uint32_t kRawVersion = 1;
constexpr std::size_t kRawHeaderBytes = 20;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void require_tag(const ImageTensor& img, RangeTag expected, const char* op) {
  if (img.range() != expected) {
    throw Error(ErrorCode::kWrongRangeTag,
                std::string(op) + " expects a " +
                    (expected == RangeTag::kByte ? "Byte" : "Unit") + " tensor");
  }
}

}  // namespace

ImageTensor::ImageTensor(Shape shape, RangeTag tag)
    : shape_(shape), tag_(tag), data_(shape.size(), 0.0) {}

ImageTensor::ImageTensor(Shape shape, RangeTag tag, std::vector<double> data)
    : shape_(shape), tag_(tag), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "data length " + std::to_string(data_.size()) + " != H*W*C " +
                    std::to_string(shape_.size()));
  }
}

double byte_to_unit(double v) { return v / 127.5 - 1.0; }
double unit_to_byte(double v) { return (v + 1.0) * 127.5; }
double quantize_value(double v) { return std::clamp(std::round(v), 0.0, 255.0); }

ImageTensor to_unit_range(const ImageTensor& img) {
  require_tag(img, RangeTag::kByte, "to_unit_range");
  std::vector<double> out(img.size());
  std::transform(img.data().begin(), img.data().end(), out.begin(), byte_to_unit);
  return ImageTensor(img.shape(), RangeTag::kUnit, std::move(out));
}

ImageTensor to_byte_range(const ImageTensor& img) {
  require_tag(img, RangeTag::kUnit, "to_byte_range");
  std::vector<double> out(img.size());
  std::transform(img.data().begin(), img.data().end(), out.begin(), unit_to_byte);
  return ImageTensor(img.shape(), RangeTag::kByte, std::move(out));
}

ImageTensor quantize_8bit(const ImageTensor& img) {
  require_tag(img, RangeTag::kByte, "quantize_8bit");
  std::vector<double> out(img.size());
  std::transform(img.data().begin(), img.data().end(), out.begin(), quantize_value);
  return ImageTensor(img.shape(), RangeTag::kByte, std::move(out));
}

void write_raw_float(const ImageTensor& img, const std::filesystem::path& path) {
  std::vector<unsigned char> buf;
  buf.reserve(kRawHeaderBytes + 4 * img.size());
  buf.insert(buf.end(), kRawMagic.begin(), kRawMagic.end());
  put_u32(buf, kRawVersion);
  put_u32(buf, static_cast<std::uint32_t>(img.height()));
  put_u32(buf, static_cast<std::uint32_t>(img.width()));
  put_u32(buf, static_cast<std::uint32_t>(img.channels()));
  for (double v : img.data()) {
    put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

ImageTensor read_raw_float(const std::filesystem::path& path, RangeTag tag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < kRawHeaderBytes) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": file shorter than header");
  }
  if (!std::equal(kRawMagic.begin(), kRawMagic.end(), buf.begin())) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": bad magic");
  }
  const std::uint32_t version = get_u32(&buf[4]);
  if (version != kRawVersion) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": unsupported version " + std::to_string(version));
  }
  const Shape shape{get_u32(&buf[8]), get_u32(&buf[12]), get_u32(&buf[16])};
  if (buf.size() != kRawHeaderBytes + 4 * shape.size()) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": payload size does not match H*W*C");
  }
  std::vector<double> data(shape.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::bit_cast<float>(get_u32(&buf[kRawHeaderBytes + 4 * i]));
  }
  return ImageTensor(shape, tag, std::move(data));
}

ImageTensor read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    const std::string msg = image.message;
    png_image_free(&image);
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": " + msg);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": unsupported bit depth (only 8-bit)");
  }
  if (image.format & PNG_FORMAT_FLAG_ALPHA) {
    png_image_free(&image);
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": alpha channel not supported");
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const Shape shape{image.height, image.width, color ? 3u : 1u};
  std::vector<png_byte> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::kIo, path.string() + ": " + msg);
  }
  std::vector<double> data(pixels.begin(), pixels.end());
  return ImageTensor(shape, RangeTag::kByte, std::move(data));
}

void write_png(const ImageTensor& img, const std::filesystem::path& path) {
  if (img.range() != RangeTag::kByte) {
    throw Error(ErrorCode::kWrongRangeTag, "write_png expects a Byte tensor");
  }
  if (img.channels() != 1 && img.channels() != 3) {
    throw Error(ErrorCode::kUnsupportedFormat, "write_png supports 1 or 3 channels");
  }
  std::vector<png_byte> pixels(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = img[i];
    if (!(v >= 0.0 && v <= 255.0) || v != std::round(v)) {
      throw Error(ErrorCode::kInvalidArgument, "write_png needs integer values in [0, 255]; quantize first");
    }
    pixels[i] = static_cast<png_byte>(v);
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::kIo, path.string() + ": " + msg);
  }
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kShapeMismatch, "max_abs_diff size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace advad
