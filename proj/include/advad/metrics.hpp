#pragma once

#include <cstddef>
#include <span>

#include "advad/image.hpp"

namespace advad {

/// PSNR reported for identical images.
inline constexpr double kPsnrCap = 100.0;

struct MetricsRow {
  bool success = false;
  double linf = 0.0;  // max |a - b| / 255
  double l2 = 0.0;    // ||(a - b) / 255||_2 over the whole tensor
  double psnr = kPsnrCap;
  double ssim = 1.0;
};

// Distances take byte-range inputs and report them normalized by 255.
double linf_dist(const ImageTensor& a, const ImageTensor& b);
double l2_dist(const ImageTensor& a, const ImageTensor& b);

/// 10 log10(255^2 / MSE), capped at kPsnrCap.
double psnr(const ImageTensor& a, const ImageTensor& b);

/// Mean SSIM over all `window` x `window` windows (stride 1, uniform weights,
/// population statistics) of the channel-mean grayscale images, with
/// C1 = (0.01 * 255)^2 and C2 = (0.03 * 255)^2. Throws kInvalidArgument when
/// the image is smaller than the window.
double ssim(const ImageTensor& a, const ImageTensor& b, std::size_t window = 8);

/// successes / attacked; kEmptyInput on an empty list.
double asr(std::span<const bool> successes);

MetricsRow compute_metrics(const ImageTensor& adversarial, const ImageTensor& original, bool success);

}  // namespace advad
