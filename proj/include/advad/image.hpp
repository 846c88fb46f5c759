#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace advad {

/// Value range an image lives in: Unit is the diffusion range [-1, 1],
/// Byte is the pixel range [0, 255].
enum class RangeTag { kUnit, kByte };

struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t size() const { return height * width * channels; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// H x W x C raster of reals stored row-major as (row, column, channel).
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(Shape shape, RangeTag tag);
  ImageTensor(Shape shape, RangeTag tag, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }
  RangeTag range() const { return tag_; }

  double& at(std::size_t row, std::size_t col, std::size_t ch) {
    return data_[(row * shape_.width + col) * shape_.channels + ch];
  }
  double at(std::size_t row, std::size_t col, std::size_t ch) const {
    return data_[(row * shape_.width + col) * shape_.channels + ch];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  Shape shape_;
  RangeTag tag_ = RangeTag::kByte;
  std::vector<double> data_;
};

/// v -> v / 127.5 - 1. Throws kWrongRangeTag unless the input is Byte.
ImageTensor to_unit_range(const ImageTensor& img);

/// v -> (v + 1) * 127.5, no clamping. Throws kWrongRangeTag unless Unit.
ImageTensor to_byte_range(const ImageTensor& img);

/// v -> clamp(round(v), 0, 255).
ImageTensor quantize_8bit(const ImageTensor& img);

double unit_to_byte(double v);
double byte_to_unit(double v);
double quantize_value(double v);

/// "ADVF" raw float container: magic, then little-endian u32 version, H, W, C,
/// then H*W*C little-endian IEEE-754 binary32 values. Values are rounded to
/// binary32 on write; the range tag is not stored (read returns Unit unless
/// told otherwise).
void write_raw_float(const ImageTensor& img, const std::filesystem::path& path);
ImageTensor read_raw_float(const std::filesystem::path& path, RangeTag tag = RangeTag::kUnit);

/// 8-bit grayscale or RGB PNG. write_png requires an integer-valued Byte
/// tensor with 1 or 3 channels.
ImageTensor read_png(const std::filesystem::path& path);
void write_png(const ImageTensor& img, const std::filesystem::path& path);

/// Largest |a_i - b_i|; throws kShapeMismatch on differing shapes.
double max_abs_diff(std::span<const double> a, std::span<const double> b);

}  // namespace advad
