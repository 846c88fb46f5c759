#include "advad/report.hpp"

#include <cmath>
#include <fstream>

#include "advad/error.hpp"

namespace advad {

namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json to_json(const AttackConfig& cfg) {
  return {{"method", to_string(cfg.mode)},
          {"xi", cfg.xi},
          {"xi_byte", cfg.xi * 255.0},
          {"steps", cfg.steps},
          {"beta_min", cfg.beta_min},
          {"beta_max", cfg.beta_max},
          {"gradient_chain", to_string(cfg.gradient_chain)},
          {"use_cam", cfg.use_cam},
          {"seed", cfg.seed},
          {"precision", to_string(cfg.precision)},
          {"trace", cfg.trace},
          {"deep_trace", cfg.deep_trace}};
}

nlohmann::json to_json(const PgdConfig& cfg) {
  return {{"method", "pgd"},
          {"xi", cfg.xi},
          {"xi_byte", cfg.xi * 255.0},
          {"steps", cfg.steps},
          {"step_size", cfg.effective_step_size()},
          {"random_start", cfg.random_start},
          {"seed", cfg.seed}};
}

nlohmann::json to_json(const PgdDecayConfig& cfg) {
  return {{"method", "pgd-decay"}, {"xi", cfg.xi}, {"xi_byte", cfg.xi * 255.0}, {"eta", cfg.eta}, {"seed", cfg.seed}};
}

nlohmann::json to_json(const Schedule& schedule) {
  const std::size_t T = schedule.steps();
  return {{"T", T},
          {"beta_min", schedule.beta_min()},
          {"beta_max", schedule.beta_max()},
          {"alpha_T", schedule.alpha(T)},
          {"sum_lambda", schedule.noise_ratio(T)}};
}

nlohmann::json to_json(const MetricsRow& row) {
  return {{"success", row.success}, {"linf", row.linf}, {"l2", row.l2}, {"psnr", row.psnr}, {"ssim", row.ssim}};
}

nlohmann::json to_json(const BatchSummary& s) {
  return {{"attacked", s.attacked},   {"asr", s.asr},           {"mean_linf", s.mean_linf},
          {"mean_l2", s.mean_l2},     {"median_l2", s.median_l2}, {"mean_psnr", s.mean_psnr},
          {"mean_ssim", s.mean_ssim}, {"mean_guided_steps", s.mean_guided_steps}};
}

nlohmann::json to_json(const ImageRun& run) {
  nlohmann::json j = {{"index", run.index},
                      {"name", run.name},
                      {"label", run.label},
                      {"clean_correct", run.clean_correct},
                      {"attacked", run.attacked}};
  if (run.attacked && run.result) {
    const AttackResult& r = *run.result;
    j["method"] = r.method;
    j["success_raw"] = r.success_raw;
    j["success_quantized"] = r.success_quantized;
    j["pred_raw"] = r.pred_raw;
    j["pred_quantized"] = r.pred_quantized;
    j["guided_steps"] = r.guided_steps;
    j["metrics"] = to_json(run.metrics);
    j["metrics_raw"] = to_json(run.metrics_raw);
  }
  return j;
}

nlohmann::json run_report(const std::string& command, const nlohmann::json& config, const nlohmann::json& schedule,
                          const nlohmann::json& dataset, std::span<const ImageRun> runs,
                          const nlohmann::json& verification) {
  nlohmann::json rows = nlohmann::json::array();
  nlohmann::json per_image = nlohmann::json::array();
  double total = 0.0;
  for (const ImageRun& r : runs) {
    rows.push_back(to_json(r));
    per_image.push_back(r.seconds);
    total += r.seconds;
  }
  nlohmann::json report = {{"command", command},
                           {"config", config},
                           {"schedule", schedule},
                           {"dataset", dataset},
                           {"rows", std::move(rows)},
                           {"aggregate", to_json(summarize(runs))},
                           {"verification", verification}};
  report["timing"] = {{"per_image_seconds", std::move(per_image)}, {"total_seconds", total}};
  return report;
}

void write_trace_jsonl(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const StepRecord& r : trace.steps) {
    const nlohmann::json j = {{"t", r.t},
                              {"p_f", finite_or_null(r.p_f)},
                              {"delta_linf", r.delta_linf},
                              {"lambda_t", r.lambda},
                              {"skipped", r.skipped}};
    out << j.dump() << '\n';
  }
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": " + e.what());
  }
}

}  // namespace advad
