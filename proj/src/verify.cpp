#include "advad/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "advad/error.hpp"

namespace advad {

namespace fs = std::filesystem;

Tolerances tolerances_for(Precision precision) {
  if (precision == Precision::kF32) return {1e-3, 1e-4};
  return {1e-8, 1e-9};
}

bool VerificationReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

void VerificationReport::append(const VerificationReport& other) {
  checks.insert(checks.end(), other.checks.begin(), other.checks.end());
}

const CheckResult* VerificationReport::find(const std::string& name) const {
  for (const CheckResult& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

nlohmann::json VerificationReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const CheckResult& c : checks) {
    nlohmann::json j = {{"name", c.name},        {"observed", c.observed}, {"bound", c.bound},
                        {"margin", c.margin},    {"tolerance", c.tolerance}, {"checked", c.checked},
                        {"violations", c.violations}, {"pass", c.pass}};
    j["worst_step"] = c.worst_step ? nlohmann::json(*c.worst_step) : nlohmann::json(nullptr);
    arr.push_back(std::move(j));
  }
  return {{"pass", pass()}, {"checks", std::move(arr)}};
}

double theorem1_state_bound(const Schedule& schedule, std::size_t t, double xi_internal) {
  const std::size_t T = schedule.steps();
  const double v = schedule.sqrt_alpha(t) - schedule.sqrt_one_minus_alpha(t) * schedule.sqrt_alpha(T) /
                                                schedule.sqrt_one_minus_alpha(T);
  return std::max(v, 0.0) * xi_internal;
}

double prop2_bound(const Schedule& schedule, std::size_t t, double xi_internal) {
  return 2.0 * schedule.noise_ratio(t) / schedule.noise_ratio(schedule.steps()) * xi_internal;
}

namespace {

CheckResult make_check(const std::string& name) {
  CheckResult c;
  c.name = name;
  return c;
}

void observe(CheckResult& c, double observed, double bound, double tol, std::size_t step) {
  ++c.checked;
  const bool violated = !(observed <= bound + tol);
  if (violated) {
    ++c.violations;
    c.pass = false;
  }
  const double excess = observed - bound;
  if (!c.worst_step || excess > c.observed - c.bound || std::isnan(excess)) {
    c.observed = observed;
    c.bound = bound;
    c.tolerance = tol;
    c.margin = bound + tol - observed;
    c.worst_step = step;
  }
}

double linf(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]);
    if (!(d <= m)) m = d;  // propagates NaN
  }
  return m;
}

const DeepTrace& require_deep(const Trace& trace) {
  if (!trace.deep || trace.deep->steps() == 0) {
    throw Error(ErrorCode::kMissingTrace, "verification needs a deep trace with per-step tensors");
  }
  return *trace.deep;
}

void check_schedule_match(const DeepTrace& deep, const Schedule& schedule) {
  if (deep.steps() != schedule.steps()) {
    throw Error(ErrorCode::kInvalidArgument, "trace has " + std::to_string(deep.steps()) +
                                                 " steps, schedule has " + std::to_string(schedule.steps()));
  }
  for (std::size_t t = 1; t <= deep.steps(); ++t) {
    if (deep.x_hat[t].size() != deep.x_ori_unit.size() || deep.x0_hat[t].size() != deep.x_ori_unit.size() ||
        deep.eps_hat[t].size() != deep.x_ori_unit.size()) {
      throw Error(ErrorCode::kMissingTrace, "trace is missing tensors for step " + std::to_string(t));
    }
  }
  if (deep.x_hat[0].size() != deep.x_ori_unit.size()) {
    throw Error(ErrorCode::kMissingTrace, "trace is missing the endpoint");
  }
}

// Slack for a trace whose tensors went through binary32 storage.
double lossy_premise_slack(const DeepTrace& deep) {
  if (!deep.lossy_storage) return 0.0;
  double m = 1.0;
  for (double v : deep.eps0) m = std::max(m, std::abs(v));
  return 4.0 * m * std::numeric_limits<float>::epsilon();
}

}  // namespace

StreamingVerifier::StreamingVerifier(double premise_abs, bool lossy) : premise_abs_(premise_abs), lossy_(lossy) {}

void StreamingVerifier::on_start(const RunContext& ctx) {
  ctx_ = ctx;
  x_ori_.assign(ctx.x_ori_unit.begin(), ctx.x_ori_unit.end());
  eps0_.assign(ctx.eps0.begin(), ctx.eps0.end());
  sum_.assign(x_ori_.size(), 0.0);
  ctx_.x_ori_unit = x_ori_;
  ctx_.eps0 = eps0_;
  premise_ = make_check("theorem1_premise");
  state_ = make_check("theorem1_state");
  x0_ = make_check("theorem1_x0");
  endpoint_ = make_check("theorem1_endpoint");
  prop1_ = make_check("prop1_reconstruction");
  report_ = {};
}

void StreamingVerifier::on_step(const StepState& st) {
  const Schedule& s = *ctx_.schedule;
  const double xi = ctx_.xi_internal;
  const Tolerances tol = tolerances_for(lossy_ ? Precision::kF32 : ctx_.precision);
  const std::size_t t = st.t;
  const double a = s.sqrt_alpha(t);
  const double b = s.sqrt_one_minus_alpha(t);
  const double lam = s.lambda(t);

  double premise = 0.0, state = 0.0;
  for (std::size_t i = 0; i < x_ori_.size(); ++i) {
    const double delta = eps0_[i] - st.eps_hat[i];
    premise = std::max(premise, std::abs(delta));
    state = std::max(state, std::abs(st.x_hat[i] - (a * x_ori_[i] + b * eps0_[i])));
    sum_[i] += lam * delta;
    if (std::isnan(delta)) premise = delta;
  }
  observe(premise_, premise, ctx_.rho, premise_abs_, t);
  observe(state_, state, theorem1_state_bound(s, t, xi), tol.bound_rel * xi, t);
  observe(x0_, linf(st.x0_hat, x_ori_), xi, tol.bound_rel * xi, t);
}

void StreamingVerifier::on_finish(std::span<const double> x_adv_unit) {
  const double xi = ctx_.xi_internal;
  const Tolerances tol = tolerances_for(lossy_ ? Precision::kF32 : ctx_.precision);
  observe(endpoint_, linf(x_adv_unit, x_ori_), xi, tol.bound_rel * xi, 0);
  double recon = 0.0;
  for (std::size_t i = 0; i < x_ori_.size(); ++i) {
    const double d = std::abs(x_adv_unit[i] - (x_ori_[i] + sum_[i]));
    if (!(d <= recon)) recon = d;
  }
  observe(prop1_, recon, 0.0, tol.reconstruction_abs, 0);
  report_.checks = {premise_, state_, x0_, endpoint_, prop1_};
}

namespace {

VerificationReport replay(const Trace& trace, const Schedule& schedule, double xi_internal) {
  const DeepTrace& deep = require_deep(trace);
  check_schedule_match(deep, schedule);
  StreamingVerifier v(lossy_premise_slack(deep), deep.lossy_storage);
  RunContext ctx;
  ctx.schedule = &schedule;
  ctx.x_ori_unit = deep.x_ori_unit;
  ctx.eps0 = deep.eps0;
  ctx.xi_internal = xi_internal;
  ctx.rho = constraint_radius(schedule, xi_internal).rho;
  ctx.precision = deep.precision;
  v.on_start(ctx);
  for (std::size_t t = schedule.steps(); t >= 1; --t) {
    StepState st;
    st.t = t;
    st.x_hat = deep.x_hat[t];
    st.x0_hat = deep.x0_hat[t];
    st.eps_hat = deep.eps_hat[t];
    v.on_step(st);
  }
  v.on_finish(deep.x_hat[0]);
  return v.report();
}

VerificationReport select(const VerificationReport& full, std::initializer_list<const char*> names) {
  VerificationReport out;
  for (const char* n : names) out.checks.push_back(*full.find(n));
  return out;
}

}  // namespace

VerificationReport check_theorem1(const Trace& trace, const Schedule& schedule, double xi_internal) {
  return select(replay(trace, schedule, xi_internal),
                {"theorem1_premise", "theorem1_state", "theorem1_x0", "theorem1_endpoint"});
}

VerificationReport check_prop1(const Trace& trace, const Schedule& schedule) {
  // The reconstruction does not depend on the budget; any positive value works.
  return select(replay(trace, schedule, 1.0), {"prop1_reconstruction"});
}

VerificationReport check_prop2(const Trace& trace, const Schedule& schedule, double xi_internal) {
  const DeepTrace& deep = require_deep(trace);
  check_schedule_match(deep, schedule);
  const Tolerances tol = tolerances_for(deep.lossy_storage ? Precision::kF32 : deep.precision);
  CheckResult steps = make_check("prop2_bound");
  for (std::size_t t = schedule.steps(); t >= 1; --t) {
    observe(steps, linf(deep.x_hat[0], deep.x0_hat[t]), prop2_bound(schedule, t, xi_internal),
            tol.bound_rel * xi_internal, t);
  }
  CheckResult at_t = make_check("prop2_bound_at_T");
  const double b = prop2_bound(schedule, schedule.steps(), xi_internal);
  const double target = 2.0 * xi_internal;
  ++at_t.checked;
  at_t.observed = b;
  at_t.bound = target;
  at_t.tolerance = 1e-10;
  at_t.margin = 1e-10 - std::abs(b - target);
  at_t.worst_step = schedule.steps();
  at_t.pass = at_t.margin >= 0.0;
  at_t.violations = at_t.pass ? 0 : 1;
  VerificationReport r;
  r.checks = {steps, at_t};
  return r;
}

VerificationReport verify_trace(const Trace& trace, const Schedule& schedule, double xi_internal) {
  VerificationReport r = replay(trace, schedule, xi_internal);
  r.append(check_prop2(trace, schedule, xi_internal));
  return r;
}

nlohmann::json DecayStats::to_json() const {
  return {{"steps", steps},
          {"traces", traces},
          {"t", t},
          {"lambda", lambda},
          {"mean_delta_linf", mean_delta},
          {"max_delta_linf", max_delta},
          {"mean_weighted_delta", mean_weighted},
          {"max_weighted_delta", max_weighted},
          {"decile", decile},
          {"first_decile_mean", first_decile_mean},
          {"last_decile_mean", last_decile_mean},
          {"decays", decays}};
}

DecayStats decay_stats(std::span<const Trace> traces) {
  if (traces.empty()) throw Error(ErrorCode::kEmptyInput, "decay statistics need at least one trace");
  const std::size_t T = traces.front().steps.size();
  if (T == 0) throw Error(ErrorCode::kMissingTrace, "trace has no step records");
  DecayStats d;
  d.steps = T;
  d.traces = traces.size();
  d.t.resize(T);
  d.lambda.resize(T);
  d.mean_delta.assign(T, 0.0);
  d.max_delta.assign(T, 0.0);
  d.mean_weighted.assign(T, 0.0);
  d.max_weighted.assign(T, 0.0);
  for (const Trace& tr : traces) {
    if (tr.steps.size() != T) throw Error(ErrorCode::kInvalidArgument, "traces differ in step count");
    for (std::size_t i = 0; i < T; ++i) {
      const StepRecord& r = tr.steps[i];
      d.t[i] = r.t;
      d.lambda[i] = r.lambda;
      const double w = r.lambda * r.delta_linf;
      d.mean_delta[i] += r.delta_linf;
      d.max_delta[i] = std::max(d.max_delta[i], r.delta_linf);
      d.mean_weighted[i] += w;
      d.max_weighted[i] = std::max(d.max_weighted[i], w);
    }
  }
  const double n = static_cast<double>(traces.size());
  for (std::size_t i = 0; i < T; ++i) {
    d.mean_delta[i] /= n;
    d.mean_weighted[i] /= n;
  }
  d.decile = (T + 9) / 10;
  for (std::size_t i = 0; i < d.decile; ++i) {
    d.first_decile_mean += d.mean_delta[i];
    d.last_decile_mean += d.mean_delta[T - 1 - i];
  }
  d.first_decile_mean /= static_cast<double>(d.decile);
  d.last_decile_mean /= static_cast<double>(d.decile);
  d.decays = d.last_decile_mean <= d.first_decile_mean;
  return d;
}

// ---------------------------------------------------------------------------
// deep trace storage

namespace {

std::string step_file(std::size_t t, const char* kind) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "step_%05zu_%s.advf", t, kind);
  return buf;
}

void write_vec(const std::vector<double>& v, const Shape& shape, const fs::path& path) {
  write_raw_float(ImageTensor(shape, RangeTag::kUnit, v), path);
}

std::vector<double> read_vec(const fs::path& path, const Shape& shape) {
  ImageTensor img = read_raw_float(path);
  if (img.shape() != shape) throw Error(ErrorCode::kShapeMismatch, path.string() + ": unexpected shape");
  return img.data();
}

nlohmann::json nan_to_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

}  // namespace

void write_deep_trace(const AttackResult& result, const AttackConfig& cfg, const fs::path& dir) {
  if (!result.trace || !result.trace->deep) throw Error(ErrorCode::kMissingTrace, "result carries no deep trace");
  const DeepTrace& deep = *result.trace->deep;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json records = nlohmann::json::array();
  for (const StepRecord& r : result.trace->steps) {
    records.push_back({{"t", r.t},
                       {"p_f", nan_to_null(r.p_f)},
                       {"delta_linf", r.delta_linf},
                       {"lambda_t", r.lambda},
                       {"skipped", r.skipped}});
  }
  const nlohmann::json meta = {
      {"format", "advad-deep-trace"},
      {"version", 1},
      {"method", result.method},
      {"label", result.label},
      {"steps", cfg.steps},
      {"beta_min", cfg.beta_min},
      {"beta_max", cfg.beta_max},
      {"xi", cfg.xi},
      {"xi_internal", cfg.xi_internal()},
      {"precision", to_string(deep.precision)},
      {"shape", {deep.shape.height, deep.shape.width, deep.shape.channels}},
      {"guided_steps", result.guided_steps},
      {"records", records},
  };
  std::ofstream out(dir / "meta.json");
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';

  write_vec(deep.x_ori_unit, deep.shape, dir / "x_ori.advf");
  write_vec(deep.eps0, deep.shape, dir / "eps0.advf");
  write_vec(deep.x_hat[0], deep.shape, dir / "x_adv.advf");
  for (std::size_t t = 1; t <= deep.steps(); ++t) {
    write_vec(deep.x_hat[t], deep.shape, dir / step_file(t, "x"));
    write_vec(deep.x0_hat[t], deep.shape, dir / step_file(t, "x0"));
    write_vec(deep.eps_hat[t], deep.shape, dir / step_file(t, "eps"));
  }
}

StoredTrace read_deep_trace(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  std::ifstream in(meta_path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + meta_path.string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedHeader, meta_path.string() + ": " + e.what());
  }
  StoredTrace st;
  DeepTrace deep;
  try {
    if (meta.at("format") != "advad-deep-trace") throw Error(ErrorCode::kMalformedHeader, "not a deep trace");
    st.steps = meta.at("steps").get<std::size_t>();
    st.beta_min = meta.at("beta_min").get<double>();
    st.beta_max = meta.at("beta_max").get<double>();
    st.xi = meta.at("xi").get<double>();
    st.method = meta.at("method").get<std::string>();
    const auto& shape = meta.at("shape");
    deep.shape = {shape.at(0).get<std::size_t>(), shape.at(1).get<std::size_t>(), shape.at(2).get<std::size_t>()};
    deep.precision = meta.at("precision") == "f32" ? Precision::kF32 : Precision::kF64;
    for (const auto& r : meta.at("records")) {
      StepRecord rec;
      rec.t = r.at("t").get<std::size_t>();
      rec.p_f = r.at("p_f").is_null() ? std::numeric_limits<double>::quiet_NaN() : r.at("p_f").get<double>();
      rec.delta_linf = r.at("delta_linf").get<double>();
      rec.lambda = r.at("lambda_t").get<double>();
      rec.skipped = r.at("skipped").get<bool>();
      st.trace.steps.push_back(rec);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedHeader, meta_path.string() + ": " + e.what());
  }
  // binary32 storage is exact for 32-bit runs only
  deep.lossy_storage = deep.precision == Precision::kF64;
  deep.x_ori_unit = read_vec(dir / "x_ori.advf", deep.shape);
  deep.eps0 = read_vec(dir / "eps0.advf", deep.shape);
  deep.x_hat.resize(st.steps + 1);
  deep.x0_hat.resize(st.steps + 1);
  deep.eps_hat.resize(st.steps + 1);
  deep.x_hat[0] = read_vec(dir / "x_adv.advf", deep.shape);
  for (std::size_t t = 1; t <= st.steps; ++t) {
    deep.x_hat[t] = read_vec(dir / step_file(t, "x"), deep.shape);
    deep.x0_hat[t] = read_vec(dir / step_file(t, "x0"), deep.shape);
    deep.eps_hat[t] = read_vec(dir / step_file(t, "eps"), deep.shape);
  }
  st.trace.deep = std::move(deep);
  return st;
}

}  // namespace advad
