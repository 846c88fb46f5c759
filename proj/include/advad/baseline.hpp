#pragma once

#include <cstddef>
#include <cstdint>

#include "advad/engine.hpp"
#include "advad/model.hpp"
#include "advad/schedule.hpp"

namespace advad {

struct PgdConfig {
  double xi = 8.0 / 255.0;  // l-inf budget, byte units out of 255
  std::size_t steps = 40;
  double step_size = -1.0;  // out of 255; negative means xi / 10
  bool random_start = true;
  std::uint64_t seed = 0;

  double effective_step_size() const { return step_size < 0.0 ? xi / 10.0 : step_size; }
  void validate() const;
};

/// x <- clip(x + step * sign(grad CE)) onto the l-inf ball around x_ori and
/// [0, 255]. The output is already integer-free (raw); the quantized companion
/// is rounded and re-projected so it respects the budget as well.
AttackResult pgd_attack(const Classifier& model, const ImageTensor& x_ori, std::size_t y_gt,
                        const PgdConfig& cfg);

struct PgdDecayConfig {
  double xi = 8.0 / 255.0;
  double eta = 3e-5;  // step factor in [0, 1] units; multiplied by lambda_t and 255
  std::uint64_t seed = 0;

  void validate() const;
};

/// Step-size-decay PGD: x_{t-1} = clip(x_t + lambda_t * eta * 255 * sign(grad CE))
/// for t = T .. 1 with the lambda_t of `schedule`. Starts at x_ori.
AttackResult pgd_decay_attack(const Classifier& model, const ImageTensor& x_ori, std::size_t y_gt,
                              const PgdDecayConfig& cfg, const Schedule& schedule);

}  // namespace advad
