#include "advad/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "advad/error.hpp"

namespace advad {

void PgdConfig::validate() const {
  if (!(xi >= 0.0) || !std::isfinite(xi)) throw Error(ErrorCode::kInvalidArgument, "xi must be finite and >= 0");
  if (!(effective_step_size() >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "step size must be >= 0");
}

void PgdDecayConfig::validate() const {
  if (!(xi >= 0.0) || !std::isfinite(xi)) throw Error(ErrorCode::kInvalidArgument, "xi must be finite and >= 0");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw Error(ErrorCode::kInvalidArgument, "eta must be finite and >= 0");
}

namespace {

struct Ball {
  std::vector<double> lo, hi;
};

Ball make_ball(const ImageTensor& x_ori, double xi) {
  const double r = 255.0 * xi;
  Ball b;
  b.lo.resize(x_ori.size());
  b.hi.resize(x_ori.size());
  for (std::size_t i = 0; i < x_ori.size(); ++i) {
    b.lo[i] = std::max(0.0, x_ori[i] - r);
    b.hi[i] = std::min(255.0, x_ori[i] + r);
  }
  return b;
}

void check_inputs(const Classifier& model, const ImageTensor& x_ori, std::size_t y_gt) {
  if (x_ori.range() != RangeTag::kByte) throw Error(ErrorCode::kWrongRangeTag, "attack input must be byte range");
  if (x_ori.shape() != model.input_shape()) {
    throw Error(ErrorCode::kShapeMismatch, "attack input does not match the classifier input shape");
  }
  if (y_gt >= model.num_classes()) throw Error(ErrorCode::kInvalidArgument, "label out of range");
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

void signed_step(const Classifier& model, ImageTensor& x, std::size_t y_gt, double step, const Ball& ball) {
  const LossGradient lg = model.loss_and_gradient(x, y_gt, LossKind::kCrossEntropy);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = std::clamp(x[i] + step * sign(lg.gradient[i]), ball.lo[i], ball.hi[i]);
  }
}

AttackResult finish(const char* method, const Classifier& model, const ImageTensor& x_ori, std::size_t y_gt,
                    const ImageTensor& x, const Ball& ball, std::size_t iterations) {
  AttackResult res;
  res.method = method;
  res.label = y_gt;
  res.x_adv_raw = x;
  ImageTensor q = quantize_8bit(x);
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = std::clamp(q[i], std::ceil(ball.lo[i]), std::floor(ball.hi[i]));
  }
  res.x_adv_quantized = std::move(q);
  res.x_adv_unit.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) res.x_adv_unit[i] = byte_to_unit(x[i]);
  res.clean_correct = model.predict(x_ori) == y_gt;
  res.pred_raw = model.predict(res.x_adv_raw);
  res.pred_quantized = model.predict(res.x_adv_quantized);
  res.success_raw = res.pred_raw != y_gt;
  res.success_quantized = res.pred_quantized != y_gt;
  res.guided_steps = iterations;
  return res;
}

}  // namespace

AttackResult pgd_attack(const Classifier& model, const ImageTensor& x_ori, std::size_t y_gt,
                        const PgdConfig& cfg) {
  cfg.validate();
  check_inputs(model, x_ori, y_gt);
  const Ball ball = make_ball(x_ori, cfg.xi);
  ImageTensor x = x_ori;
  if (cfg.random_start && cfg.xi > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u(-255.0 * cfg.xi, 255.0 * cfg.xi);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x_ori[i] + u(rng), ball.lo[i], ball.hi[i]);
  }
  const double step = 255.0 * cfg.effective_step_size();
  for (std::size_t k = 0; k < cfg.steps; ++k) signed_step(model, x, y_gt, step, ball);
  return finish("pgd", model, x_ori, y_gt, x, ball, cfg.steps);
}

AttackResult pgd_decay_attack(const Classifier& model, const ImageTensor& x_ori, std::size_t y_gt,
                              const PgdDecayConfig& cfg, const Schedule& schedule) {
  cfg.validate();
  check_inputs(model, x_ori, y_gt);
  const Ball ball = make_ball(x_ori, cfg.xi);
  ImageTensor x = x_ori;
  for (std::size_t t = schedule.steps(); t >= 1; --t) {
    signed_step(model, x, y_gt, schedule.lambda(t) * cfg.eta * 255.0, ball);
  }
  return finish("pgd-decay", model, x_ori, y_gt, x, ball, schedule.steps());
}

}  // namespace advad
