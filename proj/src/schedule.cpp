#include "advad/schedule.hpp"

#include <cmath>
#include <string>

#include "advad/error.hpp"

namespace advad {

Schedule::Schedule(std::vector<double> alphas, double beta_min, double beta_max)
    : alphas_(std::move(alphas)), beta_min_(beta_min), beta_max_(beta_max) {
  const std::size_t n = alphas_.size();
  sqrt_alphas_.resize(n);
  sqrt_one_minus_.resize(n);
  ratios_.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    sqrt_alphas_[t] = std::sqrt(alphas_[t]);
    sqrt_one_minus_[t] = std::sqrt(1.0 - alphas_[t]);
    ratios_[t] = sqrt_one_minus_[t] / sqrt_alphas_[t];
  }
}

Schedule Schedule::linear(std::size_t steps, double beta_min, double beta_max) {
  if (steps < 1) {
    throw Error(ErrorCode::kInvalidRange, "schedule needs at least one step");
  }
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
    throw Error(ErrorCode::kInvalidRange,
                "need 0 < beta_min <= beta_max < 1, got beta_min=" +
                    std::to_string(beta_min) + " beta_max=" + std::to_string(beta_max));
  }
  std::vector<double> alphas(steps + 1);
  alphas[0] = 1.0;
  for (std::size_t t = 1; t <= steps; ++t) {
    const double frac =
        steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
    const double beta = beta_min + (beta_max - beta_min) * frac;
    alphas[t] = alphas[t - 1] * (1.0 - beta);
  }
  return Schedule(std::move(alphas), beta_min, beta_max);
}

Schedule Schedule::from_alphas(std::vector<double> alphas) {
  if (alphas.size() < 2 || alphas[0] != 1.0) {
    throw Error(ErrorCode::kInvalidRange, "alpha_0 must be exactly 1 and T >= 1");
  }
  for (std::size_t t = 1; t < alphas.size(); ++t) {
    if (!(alphas[t] > 0.0) || !(alphas[t] < alphas[t - 1])) {
      throw Error(ErrorCode::kInvalidRange,
                  "alphas must be positive and strictly decreasing (t=" + std::to_string(t) + ")");
    }
  }
  return Schedule(std::move(alphas), 0.0, 0.0);
}

double Schedule::lambda(std::size_t t) const {
  if (t < 1 || t > steps()) {
    throw Error(ErrorCode::kStepOutOfRange, "lambda index " + std::to_string(t));
  }
  return ratios_[t] - ratios_[t - 1];
}

ConstraintRadius constraint_radius(const Schedule& schedule, double xi_internal) {
  if (!(xi_internal >= 0.0)) {
    throw Error(ErrorCode::kInvalidRange, "budget must be nonnegative");
  }
  const std::size_t T = schedule.steps();
  return {schedule.sqrt_alpha(T) / schedule.sqrt_one_minus_alpha(T) * xi_internal};
}

}  // namespace advad
