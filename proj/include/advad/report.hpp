#pragma once

#include <filesystem>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "advad/baseline.hpp"
#include "advad/engine.hpp"
#include "advad/schedule.hpp"
#include "advad/verify.hpp"

namespace advad {

nlohmann::json to_json(const AttackConfig& cfg);
nlohmann::json to_json(const PgdConfig& cfg);
nlohmann::json to_json(const PgdDecayConfig& cfg);
/// {T, beta_min, beta_max, alpha_T, sum_lambda}.
nlohmann::json to_json(const Schedule& schedule);
nlohmann::json to_json(const MetricsRow& row);
nlohmann::json to_json(const BatchSummary& summary);
/// Per-image row without wall-clock time.
nlohmann::json to_json(const ImageRun& run);

/// Run report: everything reproducible goes under "config", "schedule",
/// "dataset", "rows", "aggregate" and "verification"; wall-clock times go
/// under "timing" only, so two identical runs differ in that key alone.
nlohmann::json run_report(const std::string& command, const nlohmann::json& config,
                          const nlohmann::json& schedule, const nlohmann::json& dataset,
                          std::span<const ImageRun> runs, const nlohmann::json& verification);

/// One JSON object per line: {t, p_f, delta_linf, lambda_t, skipped}.
void write_trace_jsonl(const Trace& trace, const std::filesystem::path& path);

/// Pretty-printed JSON with a trailing newline.
void write_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace advad
