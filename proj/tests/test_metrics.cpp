#include <gtest/gtest.h>

#include <cmath>
#include <deque>

#include "advad/error.hpp"
#include "advad/metrics.hpp"
#include "support.hpp"

using namespace advad;

namespace {

ImageTensor constant(Shape s, double v) {
  return ImageTensor(s, RangeTag::kByte, std::vector<double>(s.size(), v));
}

// Direct per-window SSIM in long double, written independently of the library.
double ssim_oracle(const ImageTensor& a, const ImageTensor& b, std::size_t win) {
  const long double c1 = 6.5025L, c2 = 58.5225L;
  const std::size_t H = a.height(), W = a.width(), C = a.channels();
  auto gray = [&](const ImageTensor& img, std::size_t r, std::size_t c) {
    long double s = 0;
    for (std::size_t ch = 0; ch < C; ++ch) s += img.at(r, c, ch);
    return s / C;
  };
  long double total = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + win <= H; ++r) {
    for (std::size_t c = 0; c + win <= W; ++c) {
      std::vector<long double> x, y;
      for (std::size_t i = 0; i < win; ++i) {
        for (std::size_t j = 0; j < win; ++j) {
          x.push_back(gray(a, r + i, c + j));
          y.push_back(gray(b, r + i, c + j));
        }
      }
      long double mx = 0, my = 0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k];
        my += y[k];
      }
      mx /= x.size();
      my /= y.size();
      long double vx = 0, vy = 0, cov = 0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        vx += (x[k] - mx) * (x[k] - mx);
        vy += (y[k] - my) * (y[k] - my);
        cov += (x[k] - mx) * (y[k] - my);
      }
      vx /= x.size();
      vy /= x.size();
      cov /= x.size();
      total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return static_cast<double>(total / count);
}

}  // namespace

TEST(Distances, IdenticalAndSinglePixel) {
  const ImageTensor a = fixtures::random_byte_image({8, 8, 3}, 1);
  EXPECT_EQ(linf_dist(a, a), 0.0);
  EXPECT_EQ(l2_dist(a, a), 0.0);
  ImageTensor b = a;
  b.at(3, 4, 1) += 8.0;
  EXPECT_DOUBLE_EQ(linf_dist(a, b), 8.0 / 255.0);
  EXPECT_DOUBLE_EQ(l2_dist(a, b), 8.0 / 255.0);
}

TEST(Distances, MatchExtendedPrecisionOracle) {
  const ImageTensor a = fixtures::random_byte_image({16, 16, 3}, 2, false);
  const ImageTensor b = fixtures::random_byte_image({16, 16, 3}, 3, false);
  long double s = 0, m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = (static_cast<long double>(a[i]) - b[i]) / 255.0L;
    s += d * d;
    m = std::max(m, std::abs(d));
  }
  EXPECT_NEAR(l2_dist(a, b), static_cast<double>(std::sqrt(s)), 1e-12);
  EXPECT_NEAR(linf_dist(a, b), static_cast<double>(m), 1e-15);
}

TEST(Distances, ShapeMismatch) {
  const ImageTensor a = constant({4, 4, 3}, 1), b = constant({4, 4, 1}, 1);
  for (auto f : {linf_dist, l2_dist, psnr}) {
    try {
      f(a, b);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
    }
  }
}

TEST(Psnr, Fixtures) {
  const ImageTensor a = constant({16, 16, 3}, 100);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  EXPECT_NEAR(psnr(a, constant({16, 16, 3}, 101)), 48.1308, 1e-3);
  EXPECT_NEAR(psnr(a, constant({16, 16, 3}, 102)), 42.1103, 1e-3);
  EXPECT_NEAR(psnr(a, constant({16, 16, 3}, 101)), 20.0 * std::log10(255.0), 1e-12);
}

TEST(Psnr, StrictlyDecreasingInMse) {
  const ImageTensor a = constant({8, 8, 1}, 50);
  double prev = kPsnrCap + 1;
  for (double d = 0.5; d < 60; d *= 1.7) {
    const double p = psnr(a, constant({8, 8, 1}, 50 + d));
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Ssim, IdenticalIsExactlyOne) {
  const ImageTensor a = fixtures::random_byte_image({32, 32, 3}, 4);
  EXPECT_EQ(ssim(a, a), 1.0);
  const ImageTensor c = constant({8, 8, 1}, 0);
  EXPECT_EQ(ssim(c, c), 1.0);
}

TEST(Ssim, ConstantImagesClosedForm) {
  const double m1 = 100, m2 = 130, c1 = 6.5025;
  const double want = (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
  EXPECT_NEAR(ssim(constant({12, 12, 3}, m1), constant({12, 12, 3}, m2)), want, 1e-12);
}

TEST(Ssim, NegativeOfConstantImage) {
  const ImageTensor a = constant({10, 10, 3}, 40);
  ImageTensor b = a;
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = 255.0 - a[i];
  EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b, 8), 1e-12);
}

TEST(Ssim, MatchesWindowedOracleAndIsSymmetric) {
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    const ImageTensor a = fixtures::random_byte_image({14, 11, 3}, seed);
    ImageTensor b = a;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::min(255.0, b[i] + static_cast<double>(i % 7));
    EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b, 8), 1e-10);
    EXPECT_NEAR(ssim(a, b, 5), ssim_oracle(a, b, 5), 1e-10);
    EXPECT_EQ(ssim(a, b), ssim(b, a));
  }
}

TEST(Ssim, TooSmall) {
  try {
    ssim(constant({7, 20, 3}, 0), constant({7, 20, 3}, 0));
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST(Asr, HandBuiltLists) {
  const bool all[] = {true, true, true};
  const bool none[] = {false, false};
  const bool three_of_four[] = {true, false, true, true};
  EXPECT_EQ(asr(all), 1.0);
  EXPECT_EQ(asr(none), 0.0);
  EXPECT_EQ(asr(three_of_four), 0.75);
  try {
    asr(std::span<const bool>{});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyInput);
  }
}

TEST(ComputeMetrics, Row) {
  const ImageTensor a = constant({8, 8, 3}, 10), b = constant({8, 8, 3}, 12);
  const MetricsRow r = compute_metrics(b, a, true);
  EXPECT_TRUE(r.success);
  EXPECT_DOUBLE_EQ(r.linf, 2.0 / 255.0);
  EXPECT_NEAR(r.psnr, 42.1103, 1e-3);
  EXPECT_LE(r.linf, r.l2);
}
