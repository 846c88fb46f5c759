#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advad/guidance.hpp"
#include "advad/image.hpp"
#include "advad/metrics.hpp"
#include "advad/model.hpp"
#include "advad/schedule.hpp"

namespace advad {

struct Dataset;
struct Sample;

enum class AttackMode { kAdvad, kAdvadX };
enum class Precision { kF32, kF64 };

const char* to_string(AttackMode mode);
const char* to_string(GradientChain chain);
const char* to_string(Precision precision);

struct AttackConfig {
  double xi = 8.0 / 255.0;  // l-inf budget in byte units out of 255
  std::size_t steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  AttackMode mode = AttackMode::kAdvad;
  GradientChain gradient_chain = GradientChain::kFull;
  bool use_cam = false;  // advadx only
  std::uint64_t seed = 0;
  Precision precision = Precision::kF64;
  bool trace = false;       // per-step scalar records
  bool deep_trace = false;  // also keep every state tensor
  bool disable_guidance = false;  // test hook: run the bare trajectory

  /// Throws kInvalidArgument when the invariants do not hold.
  void validate() const;
  double xi_internal() const { return budget_to_internal(xi); }
  Schedule schedule() const { return Schedule::linear(steps, beta_min, beta_max); }
};

struct StepRecord {
  std::size_t t = 0;
  double p_f = 0.0;         // p(y_gt | x_t^0); NaN when the classifier was not consulted
  double delta_linf = 0.0;  // ||eps0 - eps_hat_t||_inf after projection
  double lambda = 0.0;
  bool skipped = false;
  std::optional<double> prediction_error;  // ||x_adv - x_t^0||_inf, deep traces only
};

/// Every state of one run in the [-1, 1] range, indexed by step t. x_hat[0]
/// is the endpoint; eps_hat[0] and x0_hat[0] are empty.
struct DeepTrace {
  Shape shape;
  Precision precision = Precision::kF64;  // arithmetic the run used
  bool lossy_storage = false;             // true after a binary32 round trip
  std::vector<double> x_ori_unit;
  std::vector<double> eps0;
  std::vector<std::vector<double>> x_hat;
  std::vector<std::vector<double>> x0_hat;
  std::vector<std::vector<double>> eps_hat;

  std::size_t steps() const { return x_hat.empty() ? 0 : x_hat.size() - 1; }
};

struct Trace {
  std::vector<StepRecord> steps;  // in execution order, t = T .. 1
  std::optional<DeepTrace> deep;
};

struct AttackResult {
  std::string method;
  std::size_t label = 0;
  ImageTensor x_adv_raw;        // byte range, unquantized
  ImageTensor x_adv_quantized;  // integer-valued byte range
  std::vector<double> x_adv_unit;  // endpoint in [-1, 1] before the range transform
  bool clean_correct = false;
  bool success_raw = false;
  bool success_quantized = false;
  std::size_t pred_raw = 0;
  std::size_t pred_quantized = 0;
  std::size_t guided_steps = 0;
  std::optional<Trace> trace;
};

/// Snapshot handed to a StepObserver after the projection at step t. All
/// tensors are in [-1, 1] and promoted to double.
struct StepState {
  std::size_t t = 0;
  std::span<const double> x_hat;    // x_t
  std::span<const double> x0_hat;   // x_t^0
  std::span<const double> eps_hat;  // eps_hat_t
  bool skipped = false;
};

struct RunContext {
  const Schedule* schedule = nullptr;
  std::span<const double> x_ori_unit;
  std::span<const double> eps0;
  double xi_internal = 0.0;
  double rho = 0.0;
  Precision precision = Precision::kF64;
};

/// Receives the trajectory as it is produced (streaming verification).
class StepObserver {
 public:
  virtual ~StepObserver() = default;
  virtual void on_start(const RunContext& ctx) { (void)ctx; }
  virtual void on_step(const StepState& state) = 0;
  virtual void on_finish(std::span<const double> x_adv_unit) { (void)x_adv_unit; }
};

/// sqrt(alpha_T) * x_ori + sqrt(1 - alpha_T) * eps0.
template <class Real>
std::vector<Real> forward_noise(std::span<const Real> x_ori_unit, std::span<const Real> eps0,
                                const Schedule& schedule);

/// Deterministic DDIM step from t to t - 1 driven by eps_hat_t.
template <class Real>
std::vector<Real> backward_step(std::span<const Real> x_t, std::span<const Real> eps_hat,
                                const Schedule& schedule, std::size_t t);

/// Standard-normal noise for one attack, from a 64-bit seed.
std::vector<double> sample_noise(std::size_t n, std::uint64_t seed);

/// Per-image seed derived from the run seed and the image index.
std::uint64_t image_seed(std::uint64_t run_seed, std::size_t index);

/// Non-parametric diffusion attack. mode = kAdvad runs guidance and projection
/// at every step; kAdvadX skips both whenever the current endpoint prediction
/// is already misclassified, and optionally weights guidance by a Grad-CAM mask
/// of x_ori. `observer` may be null.
AttackResult diffusion_attack(const Classifier& model, const ImageTensor& x_ori, std::size_t y_gt,
                              const AttackConfig& cfg, StepObserver* observer = nullptr);

AttackResult advad_attack(const Classifier& model, const ImageTensor& x_ori, std::size_t y_gt,
                          AttackConfig cfg, StepObserver* observer = nullptr);
AttackResult advadx_attack(const Classifier& model, const ImageTensor& x_ori, std::size_t y_gt,
                           AttackConfig cfg, StepObserver* observer = nullptr);

// ---------------------------------------------------------------------------
// batch execution

/// One attack on one image; `seed` is already image-specific and `index` is
/// the image's position in the batch.
using AttackFn = std::function<AttackResult(const Classifier&, const ImageTensor&, std::size_t label,
                                            std::uint64_t seed, std::size_t index)>;

struct ImageRun {
  std::size_t index = 0;
  std::string name;
  std::size_t label = 0;
  bool clean_correct = false;
  bool attacked = false;  // false when skipped as misclassified
  std::optional<AttackResult> result;
  MetricsRow metrics;      // on the method's primary output
  MetricsRow metrics_raw;  // on the unquantized output
  double seconds = 0.0;
};

struct BatchOptions {
  std::uint64_t seed = 0;
  bool skip_misclassified = true;
  std::size_t jobs = 1;
  bool primary_is_raw = false;  // score the unquantized output (ideal scenario)
};

/// Runs `attack` over every sample on up to `jobs` threads. Rows come back
/// in input order whatever the completion order.
std::vector<ImageRun> run_batch(const Classifier& model, std::span<const Sample> samples,
                                const AttackFn& attack, const BatchOptions& options);

struct BatchSummary {
  std::size_t attacked = 0;
  double asr = 0.0;
  double mean_linf = 0.0;
  double mean_l2 = 0.0;
  double median_l2 = 0.0;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_guided_steps = 0.0;
};

BatchSummary summarize(std::span<const ImageRun> runs);

struct SweepRow {
  std::size_t steps = 0;
  double xi = 0.0;
  BatchSummary summary;
};

/// Runs the configured attack once per entry of `steps_list` (kEmptyInput if
/// the list is empty) and tabulates ASR and imperceptibility per T.
std::vector<SweepRow> effect_of_T_sweep(const Classifier& model, std::span<const Sample> samples,
                                        std::span<const std::size_t> steps_list,
                                        const AttackConfig& cfg, const BatchOptions& options);

}  // namespace advad
