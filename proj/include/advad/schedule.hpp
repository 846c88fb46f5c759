#pragma once

#include <cstddef>
#include <vector>

namespace advad {

/// Diffusion coefficients alpha_0..alpha_T of a deterministic (sigma = 0)
/// process, with the per-step guidance weights derived from them.
///
/// All arithmetic is 64-bit regardless of the precision the attack runs in.
class Schedule {
 public:
  /// Linear beta from beta_min to beta_max over t = 1..T; alpha_t is the
  /// cumulative product of (1 - beta_s). Throws kInvalidRange on bad input.
  static Schedule linear(std::size_t steps, double beta_min, double beta_max);

  /// Builds a schedule from explicit alpha values (alpha[0] must be 1 and
  /// the sequence strictly decreasing). Mostly useful for tests.
  static Schedule from_alphas(std::vector<double> alphas);

  std::size_t steps() const { return alphas_.size() - 1; }
  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }

  double alpha(std::size_t t) const { return alphas_.at(t); }
  double sqrt_alpha(std::size_t t) const { return sqrt_alphas_.at(t); }
  double sqrt_one_minus_alpha(std::size_t t) const { return sqrt_one_minus_.at(t); }

  /// sqrt(1 - alpha_t) / sqrt(alpha_t); zero at t = 0 and increasing in t.
  double noise_ratio(std::size_t t) const { return ratios_.at(t); }

  /// lambda_t = noise_ratio(t) - noise_ratio(t - 1) for 1 <= t <= T.
  double lambda(std::size_t t) const;

  const std::vector<double>& alphas() const { return alphas_; }

 private:
  Schedule(std::vector<double> alphas, double beta_min, double beta_max);

  std::vector<double> alphas_;
  std::vector<double> sqrt_alphas_;
  std::vector<double> sqrt_one_minus_;
  std::vector<double> ratios_;
  double beta_min_ = 0.0;
  double beta_max_ = 0.0;
};

/// Radius of the l-inf ball around the initial noise that keeps the endpoint
/// within xi_internal of the clean image.
struct ConstraintRadius {
  double rho = 0.0;
};

/// rho = sqrt(alpha_T) / sqrt(1 - alpha_T) * xi_internal.
ConstraintRadius constraint_radius(const Schedule& schedule, double xi_internal);

/// Converts a byte-scale budget (e.g. 8/255) to the [-1, 1] diffusion range.
inline double budget_to_internal(double xi) { return 2.0 * xi; }

}  // namespace advad
