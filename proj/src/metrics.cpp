#include "advad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "advad/error.hpp"

namespace advad {

namespace {

void check_same(const ImageTensor& a, const ImageTensor& b) {
  if (a.shape() != b.shape()) throw Error(ErrorCode::kShapeMismatch, "metric inputs differ in shape");
}

std::vector<double> channel_mean(const ImageTensor& img) {
  const std::size_t c = img.channels();
  std::vector<double> gray(img.height() * img.width(), 0.0);
  for (std::size_t p = 0; p < gray.size(); ++p) {
    double s = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) s += img[p * c + ch];
    gray[p] = s / static_cast<double>(c);
  }
  return gray;
}

}  // namespace

double linf_dist(const ImageTensor& a, const ImageTensor& b) {
  check_same(a, b);
  return max_abs_diff(a.values(), b.values()) / 255.0;
}

double l2_dist(const ImageTensor& a, const ImageTensor& b) {
  check_same(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = (a[i] - b[i]) / 255.0;
    s += d * d;
  }
  return std::sqrt(s);
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
  check_same(a, b);
  if (a.size() == 0) throw Error(ErrorCode::kEmptyInput, "psnr of empty images");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  const double mse = s / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double ssim(const ImageTensor& a, const ImageTensor& b, std::size_t window) {
  check_same(a, b);
  if (window == 0 || a.height() < window || a.width() < window) {
    throw Error(ErrorCode::kInvalidArgument, "image smaller than the SSIM window");
  }
  constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  const std::vector<double> x = channel_mean(a);
  const std::vector<double> y = channel_mean(b);
  const std::size_t w = a.width();
  const double n = static_cast<double>(window * window);

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + window <= a.height(); ++r) {
    for (std::size_t c = 0; c + window <= w; ++c) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = r; i < r + window; ++i) {
        for (std::size_t j = c; j < c + window; ++j) {
          const double xv = x[i * w + j], yv = y[i * w + j];
          sx += xv;
          sy += yv;
          sxx += xv * xv;
          syy += yv * yv;
          sxy += xv * yv;
        }
      }
      const double mx = sx / n, my = sy / n;
      const double vx = std::max(sxx / n - mx * mx, 0.0);
      const double vy = std::max(syy / n - my * my, 0.0);
      const double cov = sxy / n - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double asr(std::span<const bool> successes) {
  if (successes.empty()) throw Error(ErrorCode::kEmptyInput, "ASR of an empty result list");
  const auto hits = std::count(successes.begin(), successes.end(), true);
  return static_cast<double>(hits) / static_cast<double>(successes.size());
}

MetricsRow compute_metrics(const ImageTensor& adversarial, const ImageTensor& original, bool success) {
  return {success, linf_dist(adversarial, original), l2_dist(adversarial, original),
          psnr(adversarial, original), ssim(adversarial, original)};
}

}  // namespace advad
