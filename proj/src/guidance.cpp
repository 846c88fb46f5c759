#include "advad/guidance.hpp"

#include <cmath>
#include <string>

#include "advad/error.hpp"

namespace advad {

namespace {

void check_step(const Schedule& schedule, std::size_t t, std::size_t min_t) {
  if (t < min_t || t > schedule.steps()) {
    throw Error(ErrorCode::kStepOutOfRange,
                "step " + std::to_string(t) + " outside [" + std::to_string(min_t) + ", " +
                    std::to_string(schedule.steps()) + "]");
  }
}

void check_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw Error(ErrorCode::kShapeMismatch, what);
}

// Moves `bound` toward `center` until it satisfies within_radius.
template <class Real>
Real tighten(Real bound, Real center, double rho) {
  while (!within_radius(bound, center, rho)) bound = std::nextafter(bound, center);
  return bound;
}

}  // namespace

template <class Real>
std::vector<Real> predict_x0(std::span<const Real> x_t, std::span<const Real> eps_prev,
                             const Schedule& schedule, std::size_t t) {
  check_step(schedule, t, 0);
  check_sizes(x_t.size(), eps_prev.size(), "predict_x0: state and noise sizes differ");
  const Real noise = static_cast<Real>(schedule.sqrt_one_minus_alpha(t));
  const Real scale = static_cast<Real>(schedule.sqrt_alpha(t));
  std::vector<Real> out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - noise * eps_prev[i]) / scale;
  return out;
}

double chain_factor(const Schedule& schedule, std::size_t t, GradientChain chain) {
  return chain == GradientChain::kFull ? 127.5 / schedule.sqrt_alpha(t) : 1.0;
}

template <class Real>
std::vector<Real> apply_guidance(std::span<const Real> eps0, const ImageTensor& grad_byte,
                                 const Schedule& schedule, std::size_t t, const Mask* mask,
                                 GradientChain chain) {
  check_step(schedule, t, 1);
  check_sizes(eps0.size(), grad_byte.size(), "guidance: noise and gradient sizes differ");
  const std::size_t channels = grad_byte.channels();
  if (mask && (mask->height != grad_byte.height() || mask->width != grad_byte.width())) {
    throw Error(ErrorCode::kShapeMismatch, "guidance: mask does not match image");
  }
  const double coef = schedule.sqrt_one_minus_alpha(t) * chain_factor(schedule, t, chain);
  std::vector<Real> out(eps0.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = mask ? mask->values[i / channels] : 1.0;
    out[i] = eps0[i] - static_cast<Real>(m * coef * grad_byte[i]);
  }
  return out;
}

template <class Real>
GuidanceResult<Real> amg_inject(std::span<const Real> eps0, const ImageTensor& x0_byte,
                                const Classifier& model, std::size_t y_gt, const Schedule& schedule,
                                std::size_t t, const Mask* mask, GradientChain chain) {
  if (x0_byte.range() != RangeTag::kByte) {
    throw Error(ErrorCode::kWrongRangeTag, "guidance expects the prediction in byte range");
  }
  if (x0_byte.shape() != model.input_shape()) {
    throw Error(ErrorCode::kShapeMismatch, "prediction shape does not match the classifier");
  }
  LossGradient lg = model.loss_and_gradient(x0_byte, y_gt, LossKind::kLog1mp);
  GuidanceResult<Real> out;
  out.eps_prime = apply_guidance<Real>(eps0, lg.gradient, schedule, t, mask, chain);
  out.p_f = softmax_prob(lg.logits, y_gt);
  out.logits = std::move(lg.logits);
  return out;
}

bool within_radius(double value, double center, double rho) { return std::abs(value - center) <= rho; }

template <class Real>
std::vector<Real> pc_project(std::span<const Real> eps_prime, std::span<const Real> eps0, double rho) {
  check_sizes(eps_prime.size(), eps0.size(), "pc_project: sizes differ");
  if (!(rho >= 0.0)) throw Error(ErrorCode::kInvalidRange, "radius must be nonnegative");
  std::vector<Real> out(eps_prime.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real v = eps_prime[i];
    const Real c = eps0[i];
    if (within_radius(v, c, rho)) {
      out[i] = v;
    } else if (v > c) {
      out[i] = tighten(static_cast<Real>(static_cast<double>(c) + rho), c, rho);
    } else {
      out[i] = tighten(static_cast<Real>(static_cast<double>(c) - rho), c, rho);
    }
  }
  return out;
}

#define ADVAD_INSTANTIATE(Real)                                                                     \
  template std::vector<Real> predict_x0<Real>(std::span<const Real>, std::span<const Real>,         \
                                              const Schedule&, std::size_t);                        \
  template std::vector<Real> apply_guidance<Real>(std::span<const Real>, const ImageTensor&,        \
                                                  const Schedule&, std::size_t, const Mask*,        \
                                                  GradientChain);                                   \
  template GuidanceResult<Real> amg_inject<Real>(std::span<const Real>, const ImageTensor&,         \
                                                 const Classifier&, std::size_t, const Schedule&,   \
                                                 std::size_t, const Mask*, GradientChain);          \
  template std::vector<Real> pc_project<Real>(std::span<const Real>, std::span<const Real>, double);

ADVAD_INSTANTIATE(float)
ADVAD_INSTANTIATE(double)

#undef ADVAD_INSTANTIATE

}  // namespace advad
