#include <gtest/gtest.h>

#include <cmath>
#include <tuple>

#include "advad/error.hpp"
#include "advad/schedule.hpp"

using namespace advad;

namespace {

// Independent oracle: cumulative product and ratio in long double.
long double oracle_alpha(std::size_t T, double bmin, double bmax, std::size_t t) {
  long double a = 1.0L;
  for (std::size_t s = 1; s <= t; ++s) {
    const long double beta =
        T == 1 ? bmin : bmin + (static_cast<long double>(bmax) - bmin) * (s - 1) / static_cast<long double>(T - 1);
    a *= 1.0L - beta;
  }
  return a;
}

}  // namespace

TEST(Schedule, SingleStepClosedForm) {
  const Schedule s = Schedule::linear(1, 0.5, 0.5);
  EXPECT_EQ(s.steps(), 1u);
  EXPECT_EQ(s.alpha(0), 1.0);
  EXPECT_DOUBLE_EQ(s.alpha(1), 0.5);
  EXPECT_DOUBLE_EQ(s.lambda(1), 1.0);
}

TEST(Schedule, DefaultMatchesExtendedPrecisionProduct) {
  const Schedule s = Schedule::linear(1000, 1e-4, 0.02);
  for (std::size_t t : {1u, 10u, 500u, 999u, 1000u}) {
    const long double want = oracle_alpha(1000, 1e-4, 0.02, t);
    EXPECT_NEAR(s.alpha(t) / static_cast<double>(want), 1.0, 1e-12) << "t=" << t;
  }
}

TEST(Schedule, ConstraintRadiusMatchesOracle) {
  const Schedule s = Schedule::linear(1000, 1e-4, 0.02);
  const double xi_int = 2.0 * 8.0 / 255.0;
  const long double a = oracle_alpha(1000, 1e-4, 0.02, 1000);
  const long double want = std::sqrt(a) / std::sqrt(1.0L - a) * xi_int;
  EXPECT_NEAR(constraint_radius(s, xi_int).rho / static_cast<double>(want), 1.0, 1e-12);
}

TEST(Schedule, RadiusEdgeCases) {
  const Schedule s = Schedule::linear(100, 1e-4, 0.02);
  EXPECT_EQ(constraint_radius(s, 0.0).rho, 0.0);
  const Schedule half = Schedule::from_alphas({1.0, 0.5});
  EXPECT_NEAR(constraint_radius(half, 0.1).rho, 0.1, 1e-15);
  EXPECT_THROW(constraint_radius(s, -1.0), Error);
}

TEST(Schedule, RejectsInvalidBounds) {
  const std::tuple<std::size_t, double, double> bad[] = {
      {0, 1e-4, 0.02}, {10, 0.0, 0.02}, {10, 0.03, 0.02}, {10, 1e-4, 1.0}, {10, -0.1, 0.2}};
  for (const auto& [T, lo, hi] : bad) {
    try {
      Schedule::linear(T, lo, hi);
      ADD_FAILURE() << "accepted T=" << T << " beta=[" << lo << ", " << hi << "]";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidRange);
    }
  }
}

TEST(Schedule, FromAlphasValidates) {
  EXPECT_THROW(Schedule::from_alphas({0.9, 0.5}), Error);
  EXPECT_THROW(Schedule::from_alphas({1.0, 0.5, 0.5}), Error);
  EXPECT_THROW(Schedule::from_alphas({1.0}), Error);
  EXPECT_NO_THROW(Schedule::from_alphas({1.0, 0.9, 0.3}));
}

TEST(Schedule, LambdaOutOfRange) {
  const Schedule s = Schedule::linear(10, 1e-4, 0.02);
  EXPECT_THROW(s.lambda(0), Error);
  EXPECT_THROW(s.lambda(11), Error);
}

// Property: every invariant over a grid of configurations.
class ScheduleProperty : public ::testing::TestWithParam<std::tuple<std::size_t, double, double>> {};

TEST_P(ScheduleProperty, Invariants) {
  const auto [T, lo, hi] = GetParam();
  const Schedule s = Schedule::linear(T, lo, hi);
  EXPECT_EQ(s.alpha(0), 1.0);
  double sum = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    EXPECT_LT(s.alpha(t), s.alpha(t - 1));
    EXPECT_GT(s.lambda(t), 0.0);
    EXPECT_GT(s.noise_ratio(t), s.noise_ratio(t - 1));
    sum += s.lambda(t);
  }
  const double r_T = s.noise_ratio(T);
  EXPECT_LE(std::abs(sum - r_T) / r_T, 1e-6);
  const double xi_int = 0.0627;
  EXPECT_LE(std::abs(constraint_radius(s, xi_int).rho * sum - xi_int) / xi_int, 1e-6);
}

INSTANTIATE_TEST_SUITE_P(Grid, ScheduleProperty,
                         ::testing::Combine(::testing::Values(1, 2, 10, 25, 50, 100, 1000),
                                            ::testing::Values(1e-4, 1e-3), ::testing::Values(0.02, 0.05)));
