#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "advad/image.hpp"
#include "advad/model.hpp"
#include "advad/schedule.hpp"

namespace advad {

/// How the classifier gradient is carried back to the noisy state x_t.
enum class GradientChain {
  kFull,    // d/dx_t through x_t^0 and the byte-range transform: 127.5 / sqrt(alpha_t)
  kX0Only,  // raw gradient w.r.t. the byte-range prediction, no extra factors
};

/// Endpoint prediction (x_t - sqrt(1 - alpha_t) * eps_prev) / sqrt(alpha_t),
/// for 0 <= t <= T. At t = 0 this is x_t itself.
template <class Real>
std::vector<Real> predict_x0(std::span<const Real> x_t, std::span<const Real> eps_prev,
                             const Schedule& schedule, std::size_t t);

/// Scalar applied to the byte-range gradient before the sqrt(1 - alpha_t)
/// noise coefficient.
double chain_factor(const Schedule& schedule, std::size_t t, GradientChain chain);

/// eps0 - m * sqrt(1 - alpha_t) * chain_factor * grad_byte. `mask` may be
/// null (m = 1); otherwise it is H x W and broadcast across channels.
template <class Real>
std::vector<Real> apply_guidance(std::span<const Real> eps0, const ImageTensor& grad_byte,
                                 const Schedule& schedule, std::size_t t, const Mask* mask,
                                 GradientChain chain);

template <class Real>
struct GuidanceResult {
  std::vector<Real> eps_prime;
  std::vector<double> logits;
  double p_f = 0.0;  // p(y_gt | x_t^0) before guidance
};

/// Attacked-model guidance: evaluates log(1 - p_f(y_gt | x_t^0)) and its
/// input gradient on the byte-range prediction, then injects it into eps0.
template <class Real>
GuidanceResult<Real> amg_inject(std::span<const Real> eps0, const ImageTensor& x0_byte,
                                const Classifier& model, std::size_t y_gt, const Schedule& schedule,
                                std::size_t t, const Mask* mask, GradientChain chain);

/// True iff |value - center| <= rho, evaluated on the values promoted to
/// double. This is the predicate pc_project guarantees.
bool within_radius(double value, double center, double rho);

/// Element-wise projection onto the l-inf ball of radius rho around eps0.
/// Elements already inside are returned bit-for-bit; clamped elements land on
/// the representable value closest to the boundary that still satisfies
/// within_radius, so the bound holds exactly in the working precision.
template <class Real>
std::vector<Real> pc_project(std::span<const Real> eps_prime, std::span<const Real> eps0, double rho);

}  // namespace advad
