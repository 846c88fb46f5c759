#include "advad/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <thread>

#include "advad/data.hpp"
#include "advad/error.hpp"

namespace advad {

const char* to_string(AttackMode mode) { return mode == AttackMode::kAdvad ? "advad" : "advadx"; }

const char* to_string(GradientChain chain) {
  return chain == GradientChain::kFull ? "full" : "x0_only";
}

const char* to_string(Precision precision) { return precision == Precision::kF32 ? "f32" : "f64"; }

void AttackConfig::validate() const {
  if (!(xi >= 0.0) || !std::isfinite(xi)) throw Error(ErrorCode::kInvalidArgument, "xi must be finite and >= 0");
  if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "steps must be >= 1");
  if (use_cam && mode != AttackMode::kAdvadX) {
    throw Error(ErrorCode::kInvalidArgument, "use_cam requires mode advadx");
  }
  if (deep_trace && !trace) throw Error(ErrorCode::kInvalidArgument, "deep_trace requires trace");
}

template <class Real>
std::vector<Real> forward_noise(std::span<const Real> x_ori_unit, std::span<const Real> eps0,
                                const Schedule& schedule) {
  if (x_ori_unit.size() != eps0.size()) throw Error(ErrorCode::kShapeMismatch, "forward_noise: sizes differ");
  const std::size_t T = schedule.steps();
  const Real a = static_cast<Real>(schedule.sqrt_alpha(T));
  const Real b = static_cast<Real>(schedule.sqrt_one_minus_alpha(T));
  std::vector<Real> out(eps0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x_ori_unit[i] + b * eps0[i];
  return out;
}

template <class Real>
std::vector<Real> backward_step(std::span<const Real> x_t, std::span<const Real> eps_hat,
                                const Schedule& schedule, std::size_t t) {
  if (t < 1 || t > schedule.steps()) {
    throw Error(ErrorCode::kStepOutOfRange, "backward_step: step " + std::to_string(t) + " outside [1, " +
                                                std::to_string(schedule.steps()) + "]");
  }
  if (x_t.size() != eps_hat.size()) throw Error(ErrorCode::kShapeMismatch, "backward_step: sizes differ");
  const Real s_prev = static_cast<Real>(schedule.sqrt_alpha(t - 1));
  const Real n_prev = static_cast<Real>(schedule.sqrt_one_minus_alpha(t - 1));
  const Real s_t = static_cast<Real>(schedule.sqrt_alpha(t));
  const Real n_t = static_cast<Real>(schedule.sqrt_one_minus_alpha(t));
  std::vector<Real> out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real x0 = (x_t[i] - n_t * eps_hat[i]) / s_t;
    out[i] = s_prev * x0 + n_prev * eps_hat[i];
  }
  return out;
}

template std::vector<float> forward_noise<float>(std::span<const float>, std::span<const float>, const Schedule&);
template std::vector<double> forward_noise<double>(std::span<const double>, std::span<const double>,
                                                   const Schedule&);
template std::vector<float> backward_step<float>(std::span<const float>, std::span<const float>, const Schedule&,
                                                 std::size_t);
template std::vector<double> backward_step<double>(std::span<const double>, std::span<const double>,
                                                   const Schedule&, std::size_t);

std::vector<double> sample_noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) v = normal(rng);
  return out;
}

std::uint64_t image_seed(std::uint64_t run_seed, std::size_t index) {
  // splitmix64 finalizer
  std::uint64_t z = run_seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

template <class Real>
std::vector<double> promote(std::span<const Real> v) {
  return std::vector<double>(v.begin(), v.end());
}

template <class Real>
ImageTensor to_byte_tensor(std::span<const Real> unit, const Shape& shape) {
  std::vector<double> data(unit.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = unit_to_byte(static_cast<double>(unit[i]));
  return ImageTensor(shape, RangeTag::kByte, std::move(data));
}

template <class Real>
void check_finite(std::span<const Real> v, std::size_t t, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw Error(ErrorCode::kNonFiniteState, std::string(what) + " became non-finite at step " +
                                                  std::to_string(t) + ", element " + std::to_string(i));
    }
  }
}

template <class Real>
double linf_between(std::span<const Real> a, std::span<const Real> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template <class Real>
AttackResult run_attack(const Classifier& model, const ImageTensor& x_ori, std::size_t y_gt,
                        const AttackConfig& cfg, StepObserver* observer) {
  const Shape shape = x_ori.shape();
  const std::size_t n = shape.size();
  const Schedule schedule = cfg.schedule();
  const std::size_t T = schedule.steps();
  const double xi_int = cfg.xi_internal();
  const double rho = constraint_radius(schedule, xi_int).rho;
  const bool advadx = cfg.mode == AttackMode::kAdvadX;

  std::optional<Mask> mask;
  if (cfg.use_cam) mask = gradcam_mask(model, x_ori, y_gt);
  const Mask* mask_ptr = mask ? &*mask : nullptr;

  std::vector<Real> x_unit(n);
  for (std::size_t i = 0; i < n; ++i) x_unit[i] = static_cast<Real>(byte_to_unit(x_ori[i]));
  std::vector<Real> eps0(n);
  {
    const std::vector<double> noise = sample_noise(n, cfg.seed);
    for (std::size_t i = 0; i < n; ++i) eps0[i] = static_cast<Real>(noise[i]);
  }

  const std::vector<double> x_unit_d = promote<Real>(x_unit);
  const std::vector<double> eps0_d = promote<Real>(eps0);
  if (observer) {
    RunContext ctx;
    ctx.schedule = &schedule;
    ctx.x_ori_unit = x_unit_d;
    ctx.eps0 = eps0_d;
    ctx.xi_internal = xi_int;
    ctx.rho = rho;
    ctx.precision = cfg.precision;
    observer->on_start(ctx);
  }

  std::optional<Trace> trace;
  if (cfg.trace) {
    trace.emplace();
    trace->steps.reserve(T);
    if (cfg.deep_trace) {
      DeepTrace deep;
      deep.shape = shape;
      deep.precision = cfg.precision;
      deep.x_ori_unit = x_unit_d;
      deep.eps0 = eps0_d;
      deep.x_hat.resize(T + 1);
      deep.x0_hat.resize(T + 1);
      deep.eps_hat.resize(T + 1);
      trace->deep = std::move(deep);
    }
  }

  std::vector<Real> x_hat = forward_noise<Real>(x_unit, eps0, schedule);
  std::vector<Real> eps_prev = eps0;
  std::size_t guided = 0;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t t = T; t >= 1; --t) {
    std::vector<Real> x0 = predict_x0<Real>(x_hat, eps_prev, schedule, t);
    std::vector<Real> eps_hat;
    double p_f = nan;
    bool skipped = false;

    if (cfg.disable_guidance) {
      eps_hat = eps0;
      skipped = true;
      if (trace) p_f = softmax_prob(model.forward(to_byte_tensor<Real>(x0, shape)), y_gt);
    } else {
      const ImageTensor x0_byte = to_byte_tensor<Real>(x0, shape);
      bool guide = true;
      if (advadx) {
        const std::vector<double> logits = model.forward(x0_byte);
        p_f = softmax_prob(logits, y_gt);
        guide = argmax(logits) == y_gt;
      }
      if (guide) {
        GuidanceResult<Real> g =
            amg_inject<Real>(eps0, x0_byte, model, y_gt, schedule, t, mask_ptr, cfg.gradient_chain);
        p_f = g.p_f;
        // Projection would silently clamp NaN, so check before it.
        check_finite<Real>(g.eps_prime, t, "guided noise");
        eps_hat = pc_project<Real>(g.eps_prime, eps0, rho);
        ++guided;
      } else {
        eps_hat = eps0;
        skipped = true;
      }
    }
    check_finite<Real>(eps_hat, t, "guided noise");

    std::vector<double> x_hat_d, x0_d, eps_d;
    const bool need_doubles = observer || (trace && trace->deep);
    if (need_doubles) {
      x_hat_d = promote<Real>(x_hat);
      x0_d = promote<Real>(x0);
      eps_d = promote<Real>(eps_hat);
    }
    if (trace) {
      StepRecord rec;
      rec.t = t;
      rec.p_f = p_f;
      rec.delta_linf = linf_between<Real>(eps0, eps_hat);
      rec.lambda = schedule.lambda(t);
      rec.skipped = skipped;
      trace->steps.push_back(rec);
    }
    if (observer) {
      StepState st;
      st.t = t;
      st.x_hat = x_hat_d;
      st.x0_hat = x0_d;
      st.eps_hat = eps_d;
      st.skipped = skipped;
      observer->on_step(st);
    }
    if (trace && trace->deep) {
      trace->deep->x_hat[t] = std::move(x_hat_d);
      trace->deep->x0_hat[t] = std::move(x0_d);
      trace->deep->eps_hat[t] = std::move(eps_d);
    }

    x_hat = backward_step<Real>(x_hat, eps_hat, schedule, t);
    check_finite<Real>(x_hat, t, "state");
    eps_prev = std::move(eps_hat);
  }

  AttackResult res;
  res.method = to_string(cfg.mode);
  res.label = y_gt;
  res.x_adv_unit = promote<Real>(x_hat);
  res.x_adv_raw = to_byte_tensor<double>(res.x_adv_unit, shape);
  res.x_adv_quantized = quantize_8bit(res.x_adv_raw);
  res.clean_correct = model.predict(x_ori) == y_gt;
  res.pred_raw = model.predict(res.x_adv_raw);
  res.pred_quantized = model.predict(res.x_adv_quantized);
  res.success_raw = res.pred_raw != y_gt;
  res.success_quantized = res.pred_quantized != y_gt;
  res.guided_steps = guided;

  if (trace && trace->deep) {
    DeepTrace& deep = *trace->deep;
    deep.x_hat[0] = res.x_adv_unit;
    for (StepRecord& rec : trace->steps) {
      rec.prediction_error = max_abs_diff(res.x_adv_unit, deep.x0_hat[rec.t]);
    }
  }
  if (observer) observer->on_finish(res.x_adv_unit);
  res.trace = std::move(trace);
  return res;
}

}  // namespace

AttackResult diffusion_attack(const Classifier& model, const ImageTensor& x_ori, std::size_t y_gt,
                              const AttackConfig& cfg, StepObserver* observer) {
  cfg.validate();
  if (x_ori.range() != RangeTag::kByte) throw Error(ErrorCode::kWrongRangeTag, "attack input must be byte range");
  if (x_ori.shape() != model.input_shape()) {
    throw Error(ErrorCode::kShapeMismatch, "attack input does not match the classifier input shape");
  }
  if (y_gt >= model.num_classes()) throw Error(ErrorCode::kInvalidArgument, "label out of range");
  if (cfg.precision == Precision::kF32) return run_attack<float>(model, x_ori, y_gt, cfg, observer);
  return run_attack<double>(model, x_ori, y_gt, cfg, observer);
}

AttackResult advad_attack(const Classifier& model, const ImageTensor& x_ori, std::size_t y_gt,
                          AttackConfig cfg, StepObserver* observer) {
  cfg.mode = AttackMode::kAdvad;
  return diffusion_attack(model, x_ori, y_gt, cfg, observer);
}

AttackResult advadx_attack(const Classifier& model, const ImageTensor& x_ori, std::size_t y_gt,
                           AttackConfig cfg, StepObserver* observer) {
  cfg.mode = AttackMode::kAdvadX;
  return diffusion_attack(model, x_ori, y_gt, cfg, observer);
}

std::vector<ImageRun> run_batch(const Classifier& model, std::span<const Sample> samples,
                                const AttackFn& attack, const BatchOptions& options) {
  std::vector<ImageRun> runs(samples.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= samples.size() || failed.load()) return;
      const Sample& s = samples[i];
      ImageRun& run = runs[i];
      run.index = i;
      run.name = s.name;
      run.label = s.label;
      try {
        const auto start = std::chrono::steady_clock::now();
        run.clean_correct = model.predict(s.image) == s.label;
        if (run.clean_correct || !options.skip_misclassified) {
          AttackResult r = attack(model, s.image, s.label, image_seed(options.seed, i), i);
          run.attacked = true;
          const ImageTensor& primary = options.primary_is_raw ? r.x_adv_raw : r.x_adv_quantized;
          const bool ok = options.primary_is_raw ? r.success_raw : r.success_quantized;
          run.metrics = compute_metrics(primary, s.image, ok);
          run.metrics_raw = compute_metrics(r.x_adv_raw, s.image, r.success_raw);
          run.result = std::move(r);
        }
        run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, samples.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return runs;
}

BatchSummary summarize(std::span<const ImageRun> runs) {
  BatchSummary s;
  std::vector<bool> ok;
  std::vector<double> l2s;
  for (const ImageRun& r : runs) {
    if (!r.attacked) continue;
    ++s.attacked;
    ok.push_back(r.metrics.success);
    l2s.push_back(r.metrics.l2);
    s.mean_linf += r.metrics.linf;
    s.mean_l2 += r.metrics.l2;
    s.mean_psnr += r.metrics.psnr;
    s.mean_ssim += r.metrics.ssim;
    if (r.result) s.mean_guided_steps += static_cast<double>(r.result->guided_steps);
  }
  if (s.attacked == 0) return s;
  const double n = static_cast<double>(s.attacked);
  s.asr = static_cast<double>(std::count(ok.begin(), ok.end(), true)) / n;
  s.mean_linf /= n;
  s.mean_l2 /= n;
  s.mean_psnr /= n;
  s.mean_ssim /= n;
  s.mean_guided_steps /= n;
  std::sort(l2s.begin(), l2s.end());
  const std::size_t m = l2s.size() / 2;
  s.median_l2 = l2s.size() % 2 ? l2s[m] : 0.5 * (l2s[m - 1] + l2s[m]);
  return s;
}

std::vector<SweepRow> effect_of_T_sweep(const Classifier& model, std::span<const Sample> samples,
                                        std::span<const std::size_t> steps_list, const AttackConfig& cfg,
                                        const BatchOptions& options) {
  if (steps_list.empty()) throw Error(ErrorCode::kEmptyInput, "empty list of step counts");
  std::vector<SweepRow> rows;
  for (std::size_t steps : steps_list) {
    AttackConfig c = cfg;
    c.steps = steps;
    c.trace = false;
    c.deep_trace = false;
    c.validate();
    AttackFn fn = [c](const Classifier& m, const ImageTensor& img, std::size_t label, std::uint64_t seed,
                      std::size_t) {
      AttackConfig local = c;
      local.seed = seed;
      return diffusion_attack(m, img, label, local);
    };
    const std::vector<ImageRun> runs = run_batch(model, samples, fn, options);
    rows.push_back({steps, cfg.xi, summarize(runs)});
  }
  return rows;
}

}  // namespace advad
