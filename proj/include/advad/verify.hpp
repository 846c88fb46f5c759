#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advad/engine.hpp"
#include "advad/schedule.hpp"

namespace advad {

/// Floating-point slack for the bound checks, keyed by precision.
struct Tolerances {
  double reconstruction_abs;  // endpoint vs x_ori + sum lambda_t delta_t, unit range
  double bound_rel;           // bounds: violation iff observed > bound + bound_rel * xi_internal
};

Tolerances tolerances_for(Precision precision);

struct CheckResult {
  std::string name;
  double observed = 0.0;  // worst observed value (or worst observed - bound for per-step bounds)
  double bound = 0.0;
  double margin = 0.0;     // bound + tolerance - observed at the worst step; negative on failure
  double tolerance = 0.0;  // absolute slack used
  std::size_t checked = 0;
  std::size_t violations = 0;
  std::optional<std::size_t> worst_step;
  bool pass = true;
};

struct VerificationReport {
  std::vector<CheckResult> checks;

  bool pass() const;
  void append(const VerificationReport& other);
  const CheckResult* find(const std::string& name) const;
  nlohmann::json to_json() const;
};

/// Bound on ||x_t - xbar_t||_inf: (sqrt(alpha_t) - sqrt(1-alpha_t) sqrt(alpha_T)/sqrt(1-alpha_T)) xi.
double theorem1_state_bound(const Schedule& schedule, std::size_t t, double xi_internal);

/// Bound on ||x_adv - x_t^0||_inf: 2 (r_t / r_T) xi with r the noise ratio.
double prop2_bound(const Schedule& schedule, std::size_t t, double xi_internal);

/// Checks the noise-ball premise, the three budget conclusions and the
/// endpoint reconstruction as the attack runs, without storing the trajectory.
class StreamingVerifier final : public StepObserver {
 public:
  /// `premise_abs` is the slack allowed on the premise (zero for states
  /// produced in memory). `lossy` selects the 32-bit tolerance table
  /// whatever precision the run used.
  explicit StreamingVerifier(double premise_abs = 0.0, bool lossy = false);

  void on_start(const RunContext& ctx) override;
  void on_step(const StepState& state) override;
  void on_finish(std::span<const double> x_adv_unit) override;

  /// Valid after on_finish.
  const VerificationReport& report() const { return report_; }

 private:
  double premise_abs_;
  bool lossy_;
  RunContext ctx_;
  std::vector<double> x_ori_;
  std::vector<double> eps0_;
  std::vector<double> sum_;  // sum_t lambda_t delta_t
  CheckResult premise_, state_, x0_, endpoint_, prop1_;
  VerificationReport report_;
};

/// Replays a deep trace through the same checks. Throws kMissingTrace when
/// the trace holds no tensors.
VerificationReport check_theorem1(const Trace& trace, const Schedule& schedule, double xi_internal);
VerificationReport check_prop1(const Trace& trace, const Schedule& schedule);
VerificationReport check_prop2(const Trace& trace, const Schedule& schedule, double xi_internal);

/// Budget bounds, reconstruction and prediction-error bound together.
VerificationReport verify_trace(const Trace& trace, const Schedule& schedule, double xi_internal);

struct DecayStats {
  std::size_t steps = 0;
  std::size_t traces = 0;
  // Indexed by execution order: entry 0 is t = T, the last entry is t = 1.
  std::vector<std::size_t> t;
  std::vector<double> lambda;
  std::vector<double> mean_delta;
  std::vector<double> max_delta;
  std::vector<double> mean_weighted;  // lambda_t * ||delta_t||_inf
  std::vector<double> max_weighted;
  std::size_t decile = 0;  // ceil(T / 10)
  double first_decile_mean = 0.0;
  double last_decile_mean = 0.0;
  bool decays = false;  // last_decile_mean <= first_decile_mean

  nlohmann::json to_json() const;
};

/// Aggregates ||delta_t||_inf over traces that share one T. kEmptyInput on an
/// empty list, kMissingTrace for runs without step records, kInvalidArgument
/// for mixed step counts.
DecayStats decay_stats(std::span<const Trace> traces);

/// A deep trace as stored on disk together with what is needed to check it.
struct StoredTrace {
  Trace trace;
  std::size_t steps = 0;
  double beta_min = 0.0;
  double beta_max = 0.0;
  double xi = 0.0;
  std::string method;
  Schedule schedule() const { return Schedule::linear(steps, beta_min, beta_max); }
};

/// Directory layout: meta.json (config and step records), x_ori.advf,
/// eps0.advf, x_adv.advf and step_<t>_{x,x0,eps}.advf, all in unit range.
void write_deep_trace(const AttackResult& result, const AttackConfig& cfg, const std::filesystem::path& dir);
StoredTrace read_deep_trace(const std::filesystem::path& dir);

}  // namespace advad
