#include "advad/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "advad/baseline.hpp"
#include "advad/data.hpp"
#include "advad/engine.hpp"
#include "advad/error.hpp"
#include "advad/model.hpp"
#include "advad/report.hpp"
#include "advad/verify.hpp"

namespace advad {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// option groups

struct DataOptions {
  std::string dataset = "synthetic";
  std::size_t classes = 2;
  std::size_t per_class = 500;
  std::size_t size = 32;
  std::uint64_t data_seed = 0;
  double train_fraction = 0.8;
  std::string split = "test";
  std::size_t limit = 0;

  void add(CLI::App& app) {
    app.add_option("--dataset", dataset, "'synthetic' or a <label>/<name>.png directory")->capture_default_str();
    app.add_option("--classes", classes, "synthetic: number of classes")->capture_default_str();
    app.add_option("--per-class", per_class, "synthetic: images per class")->capture_default_str();
    app.add_option("--size", size, "synthetic: image side length")->capture_default_str();
    app.add_option("--data-seed", data_seed, "seed for generation and the train/test split")->capture_default_str();
    app.add_option("--train-fraction", train_fraction)->capture_default_str();
    app.add_option("--limit", limit, "use only the first N images (0 = all)")->capture_default_str();
  }
  void add_split(CLI::App& app) {
    app.add_option("--split", split, "which part to use")
        ->check(CLI::IsMember({"train", "test", "all"}))
        ->capture_default_str();
  }
};

struct LoadedData {
  Dataset full;
  Split split;
  std::vector<Sample> selected;
  json info;
};

LoadedData load_data(const DataOptions& o) {
  LoadedData d;
  if (o.dataset == "synthetic") {
    d.full = gen_synthetic(o.classes, o.per_class, o.size, o.data_seed);
  } else {
    d.full = load_png_dir(o.dataset);
  }
  d.split = split_dataset(d.full, o.train_fraction, o.data_seed);
  const Dataset& part = o.split == "train" ? d.split.train : o.split == "all" ? d.full : d.split.test;
  d.selected = part.samples;
  if (o.limit > 0 && d.selected.size() > o.limit) d.selected.resize(o.limit);
  const std::string manifest = dataset_manifest(d.full).dump();
  d.info = {{"source", o.dataset},
            {"num_classes", d.full.num_classes},
            {"total", d.full.size()},
            {"data_seed", o.data_seed},
            {"train_fraction", o.train_fraction},
            {"split", o.split},
            {"selected", d.selected.size()},
            {"manifest_hash", hex64(fnv1a64(manifest.data(), manifest.size()))},
            {"test_indices", d.split.test_indices}};
  if (o.dataset == "synthetic") {
    d.info["per_class"] = o.per_class;
    d.info["size"] = o.size;
  }
  return d;
}

struct AttackOptions {
  std::string method = "advad";
  double xi_byte = 8.0;
  std::size_t steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  std::string precision = "f64";
  std::string chain = "full";
  bool use_cam = false;
  std::size_t pgd_steps = 40;
  double pgd_step_byte = -1.0;
  bool random_start = true;
  double eta = 3e-5;

  void add(CLI::App& app, bool with_method) {
    if (with_method) {
      app.add_option("--mode", method, "attack method")
          ->check(CLI::IsMember({"advad", "advadx", "pgd", "pgd-decay"}))
          ->capture_default_str();
    }
    app.add_option("--xi", xi_byte, "l-inf budget N, meaning N/255")->capture_default_str();
    app.add_option("--steps", steps, "diffusion steps T")->capture_default_str();
    app.add_option("--beta-min", beta_min)->capture_default_str();
    app.add_option("--beta-max", beta_max)->capture_default_str();
    app.add_option("--precision", precision)->check(CLI::IsMember({"f32", "f64"}))->capture_default_str();
    app.add_option("--gradient-chain", chain)->check(CLI::IsMember({"full", "x0_only"}))->capture_default_str();
    app.add_flag("--use-cam", use_cam, "advadx: weight guidance by a Grad-CAM mask of the input");
    app.add_option("--pgd-steps", pgd_steps)->capture_default_str();
    app.add_option("--pgd-step-size", pgd_step_byte, "PGD step N/255 (default xi/10)");
    app.add_option("--random-start", random_start, "PGD random start")->capture_default_str();
    app.add_option("--eta", eta, "pgd-decay step factor")->capture_default_str();
  }

  void check_xi() const {
    if (!(xi_byte >= 0.0 && xi_byte <= 255.0)) {
      throw Error(ErrorCode::kInvalidArgument, "--xi must be in [0, 255]");
    }
  }
};

struct RunOptions {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  bool skip_misclassified = true;
  bool json_out = false;
  std::string out;

  enum Scope { kOutputOnly, kSeeded, kBatch };

  void add(CLI::App& app, bool need_out, Scope scope) {
    if (scope != kOutputOnly) app.add_option("--seed", seed)->capture_default_str();
    if (scope == kBatch) {
      app.add_option("--jobs", jobs, "parallel images")->capture_default_str()->check(CLI::PositiveNumber);
      app.add_option("--skip-misclassified", skip_misclassified, "do not attack images the model gets wrong")
          ->capture_default_str();
    }
    app.add_flag("--json", json_out, "print the JSON report instead of a summary");
    auto* o = app.add_option("--out", out, "output directory");
    if (need_out) o->required();
  }
};

/// One configured method ready to run over a batch.
struct Method {
  std::string name;
  AttackFn fn;
  json config;
  json schedule;
  bool primary_is_raw = false;
  bool diffusion = false;
};

struct PerImageExtras {
  std::mutex mu;
  std::map<std::size_t, VerificationReport> verification;
};

AttackConfig diffusion_config(const AttackOptions& a, bool advadx) {
  AttackConfig cfg;
  cfg.xi = a.xi_byte / 255.0;
  cfg.steps = a.steps;
  cfg.beta_min = a.beta_min;
  cfg.beta_max = a.beta_max;
  cfg.mode = advadx ? AttackMode::kAdvadX : AttackMode::kAdvad;
  cfg.gradient_chain = a.chain == "full" ? GradientChain::kFull : GradientChain::kX0Only;
  cfg.use_cam = a.use_cam;
  cfg.precision = a.precision == "f32" ? Precision::kF32 : Precision::kF64;
  return cfg;
}

std::string safe_name(const std::string& name, std::size_t index) {
  std::string s = name.empty() ? "img_" + std::to_string(index) : name;
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) c = '_';
  }
  return s;
}

struct TraceSink {
  bool trace = false;
  bool deep = false;
  fs::path dir;
  const std::vector<Sample>* samples = nullptr;
};

Method make_method(const std::string& name, const AttackOptions& a, const TraceSink& sink,
                   std::shared_ptr<PerImageExtras> extras) {
  a.check_xi();
  Method m;
  m.name = name;
  if (name == "advad" || name == "advadx") {
    AttackConfig cfg = diffusion_config(a, name == "advadx");
    cfg.trace = sink.trace || sink.deep;
    cfg.deep_trace = sink.deep;
    cfg.validate();
    const Schedule schedule = cfg.schedule();
    m.config = to_json(cfg);
    m.schedule = to_json(schedule);
    m.primary_is_raw = name == "advadx";
    m.diffusion = true;
    m.fn = [cfg, sink, extras](const Classifier& model, const ImageTensor& img, std::size_t label,
                               std::uint64_t seed, std::size_t index) {
      AttackConfig local = cfg;
      local.seed = seed;
      StreamingVerifier verifier;
      AttackResult r = diffusion_attack(model, img, label, local, &verifier);
      if (r.trace) {
        const std::string base = safe_name((*sink.samples)[index].name, index);
        if (sink.trace) write_trace_jsonl(*r.trace, sink.dir / "traces" / (base + ".jsonl"));
        if (sink.deep) {
          write_deep_trace(r, local, sink.dir / "deep" / base);
          r.trace->deep.reset();
        }
      }
      std::lock_guard<std::mutex> lock(extras->mu);
      extras->verification[index] = verifier.report();
      return r;
    };
  } else if (name == "pgd") {
    PgdConfig cfg;
    cfg.xi = a.xi_byte / 255.0;
    cfg.steps = a.pgd_steps;
    cfg.step_size = a.pgd_step_byte < 0.0 ? -1.0 : a.pgd_step_byte / 255.0;
    cfg.random_start = a.random_start;
    cfg.validate();
    m.config = to_json(cfg);
    m.schedule = nullptr;
    m.fn = [cfg](const Classifier& model, const ImageTensor& img, std::size_t label, std::uint64_t seed,
                 std::size_t) {
      PgdConfig local = cfg;
      local.seed = seed;
      return pgd_attack(model, img, label, local);
    };
  } else if (name == "pgd-decay") {
    PgdDecayConfig cfg;
    cfg.xi = a.xi_byte / 255.0;
    cfg.eta = a.eta;
    cfg.validate();
    const Schedule schedule = Schedule::linear(a.steps, a.beta_min, a.beta_max);
    m.config = to_json(cfg);
    m.config["steps"] = a.steps;
    m.schedule = to_json(schedule);
    m.fn = [cfg, schedule](const Classifier& model, const ImageTensor& img, std::size_t label,
                           std::uint64_t seed, std::size_t) {
      PgdDecayConfig local = cfg;
      local.seed = seed;
      return pgd_decay_attack(model, img, label, local, schedule);
    };
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown method: " + name);
  }
  return m;
}

/// Streaming verification summary over a batch; pass iff every image passes.
json verification_summary(const PerImageExtras& extras, const std::vector<ImageRun>& runs) {
  if (extras.verification.empty()) return {{"mode", "none"}};
  std::map<std::string, json> per_check;
  json failures = json::array();
  bool pass = true;
  for (const auto& [index, rep] : extras.verification) {
    for (const CheckResult& c : rep.checks) {
      json& agg = per_check[c.name];
      if (agg.is_null()) agg = {{"violations", 0}, {"min_margin", c.margin}, {"pass", true}};
      agg["violations"] = agg["violations"].get<std::size_t>() + c.violations;
      agg["min_margin"] = std::min(agg["min_margin"].get<double>(), c.margin);
      if (!c.pass) {
        agg["pass"] = false;
        pass = false;
        failures.push_back({{"index", index},
                            {"name", runs[index].name},
                            {"check", c.name},
                            {"step", c.worst_step ? json(*c.worst_step) : json(nullptr)},
                            {"observed", c.observed},
                            {"bound", c.bound},
                            {"margin", c.margin}});
      }
    }
  }
  json checks = json::object();
  for (auto& [name, agg] : per_check) checks[name] = agg;
  return {{"mode", "streaming"},
          {"pass", pass},
          {"images_checked", extras.verification.size()},
          {"checks", checks},
          {"failures", failures}};
}

std::unique_ptr<BuiltinCnn> open_model(const std::string& path) {
  return std::make_unique<BuiltinCnn>(load_model(path));
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void print_summary(std::ostream& out, const std::string& label, const BatchSummary& s) {
  out << label << ": attacked=" << s.attacked << " asr=" << fmt("%.4f", s.asr)
      << " linf=" << fmt("%.5f", s.mean_linf) << " l2=" << fmt("%.4f", s.mean_l2)
      << " median_l2=" << fmt("%.4f", s.median_l2) << " psnr=" << fmt("%.2f", s.mean_psnr)
      << " ssim=" << fmt("%.4f", s.mean_ssim) << " guided=" << fmt("%.1f", s.mean_guided_steps) << '\n';
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_train(const DataOptions& data, const TrainConfig& tcfg, const RunOptions& run, std::ostream& out) {
  LoadedData d = load_data(data);
  ensure_dir(run.out);
  TrainConfig cfg = tcfg;
  cfg.seed = run.seed;
  std::ofstream log(fs::path(run.out) / "train_log.jsonl", std::ios::trunc);
  if (!log) throw Error(ErrorCode::kIo, "cannot write train_log.jsonl under " + run.out);
  TrainResult tr = train_reference(d.split.train, d.split.test, cfg, [&](const EpochLog& e) {
    log << json{{"epoch", e.epoch},
                {"mean_loss", e.mean_loss},
                {"train_accuracy", e.train_accuracy},
                {"test_accuracy", e.test_accuracy}}
               .dump()
        << '\n';
    if (!run.json_out) {
      out << "epoch " << e.epoch << " loss=" << fmt("%.4f", e.mean_loss)
          << " train_acc=" << fmt("%.4f", e.train_accuracy) << " test_acc=" << fmt("%.4f", e.test_accuracy)
          << '\n';
    }
  });
  const fs::path model_path = fs::path(run.out) / "model.advm";
  save_model(tr.model, model_path);

  std::ifstream in(model_path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json history = json::array();
  for (const EpochLog& e : tr.history) {
    history.push_back({{"epoch", e.epoch},
                       {"mean_loss", e.mean_loss},
                       {"train_accuracy", e.train_accuracy},
                       {"test_accuracy", e.test_accuracy}});
  }
  d.info.erase("split");
  d.info.erase("selected");
  const json report = {{"command", "train"},
                       {"config",
                        {{"epochs", cfg.epochs},
                         {"learning_rate", cfg.learning_rate},
                         {"batch_size", cfg.batch_size},
                         {"seed", cfg.seed},
                         {"conv1", cfg.conv1},
                         {"conv2", cfg.conv2}}},
                       {"dataset", d.info},
                       {"train_accuracy", tr.train_accuracy},
                       {"test_accuracy", tr.test_accuracy},
                       {"history", history},
                       {"model", {{"path", "model.advm"}, {"hash", hex64(fnv1a64(bytes.data(), bytes.size()))}}}};
  write_json(report, fs::path(run.out) / "train_report.json");
  if (run.json_out) {
    out << report.dump(2) << '\n';
  } else {
    out << "train_acc=" << fmt("%.4f", tr.train_accuracy) << " test_acc=" << fmt("%.4f", tr.test_accuracy)
        << " model=" << model_path.string() << '\n';
  }
  return kExitOk;
}

int cmd_attack(const std::string& model_path, const DataOptions& data, const AttackOptions& a, const RunOptions& run,
               bool trace, bool deep, std::ostream& out) {
  if (a.use_cam && a.method != "advadx") throw Error(ErrorCode::kInvalidArgument, "--use-cam requires --mode advadx");
  const auto model = open_model(model_path);
  const LoadedData d = load_data(data);
  const fs::path dir = run.out;
  ensure_dir(dir / "adv");
  ensure_dir(dir / "raw");
  if (trace || deep) ensure_dir(dir / "traces");
  if (deep) ensure_dir(dir / "deep");

  TraceSink sink{trace, deep, dir, &d.selected};
  auto extras = std::make_shared<PerImageExtras>();
  const Method m = make_method(a.method, a, sink, extras);
  BatchOptions bo{run.seed, run.skip_misclassified, run.jobs, m.primary_is_raw};
  const std::vector<ImageRun> runs = run_batch(*model, d.selected, m.fn, bo);

  for (const ImageRun& r : runs) {
    if (!r.result) continue;
    const std::string base = safe_name(r.name, r.index);
    write_png(r.result->x_adv_quantized, dir / "adv" / (base + ".png"));
    write_raw_float(r.result->x_adv_raw, dir / "raw" / (base + ".advf"));
  }
  json config = m.config;
  config["seed"] = run.seed;
  config["skip_misclassified"] = run.skip_misclassified;
  config["primary_output"] = m.primary_is_raw ? "raw" : "quantized";
  config["model"] = fs::path(model_path).filename().string();
  const json verification = verification_summary(*extras, runs);
  const json report = run_report("attack", config, m.schedule, d.info, runs, verification);
  write_json(report, dir / "report.json");

  if (run.json_out) {
    out << report.dump(2) << '\n';
  } else {
    print_summary(out, m.name, summarize(runs));
    if (m.diffusion) out << "verification: " << (verification.value("pass", false) ? "pass" : "FAIL") << '\n';
  }
  if (m.diffusion && !verification.value("pass", true)) return kExitVerificationFailed;
  return kExitOk;
}

int cmd_verify(const std::vector<std::string>& dirs, const RunOptions& run, std::ostream& out) {
  json items = json::array();
  std::vector<Trace> scalar;
  bool pass = true;
  for (const std::string& p : dirs) {
    StoredTrace st = read_deep_trace(p);
    const Schedule schedule = st.schedule();
    const VerificationReport rep = verify_trace(st.trace, schedule, budget_to_internal(st.xi));
    pass = pass && rep.pass();
    items.push_back({{"trace", p}, {"report", rep.to_json()}});
    if (!run.json_out) {
      out << p << ": " << (rep.pass() ? "pass" : "FAIL") << '\n';
      for (const CheckResult& c : rep.checks) {
        if (c.pass) continue;
        out << "  " << c.name << " violated at step " << (c.worst_step ? std::to_string(*c.worst_step) : "-")
            << ": observed " << fmt("%.6g", c.observed) << " > bound " << fmt("%.6g", c.bound) << '\n';
      }
    }
    st.trace.deep.reset();
    scalar.push_back(std::move(st.trace));
  }
  json report = {{"command", "verify"}, {"pass", pass}, {"traces", items}};
  const bool same_t = std::all_of(scalar.begin(), scalar.end(),
                                  [&](const Trace& t) { return t.steps.size() == scalar.front().steps.size(); });
  if (same_t) report["decay"] = decay_stats(scalar).to_json();
  if (!run.out.empty()) {
    ensure_dir(run.out);
    write_json(report, fs::path(run.out) / "verify_report.json");
  }
  if (run.json_out) out << report.dump(2) << '\n';
  return pass ? kExitOk : kExitVerificationFailed;
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const long long n = std::stoll(item, &pos);
      if (pos != item.size() || n < 1) throw std::invalid_argument(item);
      v.push_back(static_cast<std::size_t>(n));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad list entry: '" + item + "'");
    }
  }
  if (v.empty()) throw Error(ErrorCode::kInvalidArgument, "empty list");
  return v;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      v.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad list entry: '" + item + "'");
    }
  }
  if (v.empty()) throw Error(ErrorCode::kInvalidArgument, "empty list");
  return v;
}

json sweep_row(const SweepRow& r) {
  json j = to_json(r.summary);
  j["steps"] = r.steps;
  j["xi_byte"] = r.xi * 255.0;
  return j;
}

int cmd_bench(const std::string& model_path, const DataOptions& data, const AttackOptions& a, const RunOptions& run,
              const std::string& steps_list, const std::string& xi_list, std::ostream& out) {
  if (a.method != "advad" && a.method != "advadx") {
    throw Error(ErrorCode::kInvalidArgument, "bench runs advad or advadx");
  }
  const std::vector<std::size_t> ts = parse_size_list(steps_list);
  const std::vector<double> xis = parse_double_list(xi_list);
  for (double x : xis) {
    AttackOptions probe = a;
    probe.xi_byte = x;
    probe.check_xi();
  }
  a.check_xi();
  const auto model = open_model(model_path);
  const LoadedData d = load_data(data);
  AttackConfig cfg = diffusion_config(a, a.method == "advadx");
  cfg.validate();
  BatchOptions bo{run.seed, run.skip_misclassified, run.jobs, a.method == "advadx"};

  json t_rows = json::array();
  for (const SweepRow& r : effect_of_T_sweep(*model, d.selected, ts, cfg, bo)) t_rows.push_back(sweep_row(r));
  json xi_rows = json::array();
  for (double x : xis) {
    AttackConfig c = cfg;
    c.xi = x / 255.0;
    const std::size_t one[] = {cfg.steps};
    for (const SweepRow& r : effect_of_T_sweep(*model, d.selected, one, c, bo)) xi_rows.push_back(sweep_row(r));
  }
  json config = to_json(cfg);
  config["seed"] = run.seed;
  config["skip_misclassified"] = run.skip_misclassified;
  const json report = {{"command", "bench"},
                       {"config", config},
                       {"dataset", d.info},
                       {"t_sweep", t_rows},
                       {"xi_sweep", xi_rows}};
  if (!run.out.empty()) {
    ensure_dir(run.out);
    write_json(report, fs::path(run.out) / "bench.json");
  }
  if (run.json_out) {
    out << report.dump(2) << '\n';
  } else {
    out << "T sweep (xi=" << a.xi_byte << "/255)\n   T      ASR   median_l2   PSNR    SSIM\n";
    for (const json& r : t_rows) {
      char line[128];
      std::snprintf(line, sizeof line, "%5zu  %7.4f  %10.4f  %6.2f  %6.4f\n", r["steps"].get<std::size_t>(),
                    r["asr"].get<double>(), r["median_l2"].get<double>(), r["mean_psnr"].get<double>(),
                    r["mean_ssim"].get<double>());
      out << line;
    }
    out << "xi sweep (T=" << cfg.steps << ")\n  xi      ASR   median_l2   PSNR    SSIM\n";
    for (const json& r : xi_rows) {
      char line[128];
      std::snprintf(line, sizeof line, "%4g  %7.4f  %10.4f  %6.2f  %6.4f\n", r["xi_byte"].get<double>(),
                    r["asr"].get<double>(), r["median_l2"].get<double>(), r["mean_psnr"].get<double>(),
                    r["mean_ssim"].get<double>());
      out << line;
    }
  }
  return kExitOk;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

int cmd_compare(const std::string& model_path, const DataOptions& data, const AttackOptions& a, const RunOptions& run,
                const std::string& methods, std::ostream& out) {
  std::vector<std::string> names;
  std::stringstream ss(methods);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) names.push_back(item);
  }
  if (names.size() != 2 || names[0] == names[1]) {
    throw Error(ErrorCode::kInvalidArgument, "--methods needs exactly two distinct methods, e.g. advad,pgd");
  }
  const auto model = open_model(model_path);
  const LoadedData d = load_data(data);
  if (d.selected.empty()) throw Error(ErrorCode::kEmptyInput, "no images selected");

  json per_method = json::object();
  std::vector<std::vector<ImageRun>> all;
  for (const std::string& name : names) {
    auto extras = std::make_shared<PerImageExtras>();
    const Method m = make_method(name, a, TraceSink{false, false, {}, &d.selected}, extras);
    BatchOptions bo{run.seed, run.skip_misclassified, run.jobs, m.primary_is_raw};
    all.push_back(run_batch(*model, d.selected, m.fn, bo));
    json cfg = m.config;
    cfg["seed"] = run.seed;
    per_method[name] = {{"config", cfg},
                        {"schedule", m.schedule},
                        {"aggregate", to_json(summarize(all.back()))},
                        {"verification", verification_summary(*extras, all.back())}};
  }
  json pairs = json::array();
  std::vector<double> l2a, l2b;
  for (std::size_t i = 0; i < d.selected.size(); ++i) {
    const ImageRun& ra = all[0][i];
    const ImageRun& rb = all[1][i];
    if (!ra.attacked || !rb.attacked) continue;
    l2a.push_back(ra.metrics.l2);
    l2b.push_back(rb.metrics.l2);
    pairs.push_back({{"index", i},
                     {"name", ra.name},
                     {names[0], to_json(ra.metrics)},
                     {names[1], to_json(rb.metrics)}});
  }
  const double ma = median(l2a), mb = median(l2b);
  const json report = {{"command", "compare"},
                       {"methods", names},
                       {"dataset", d.info},
                       {"per_method", per_method},
                       {"pairs", pairs},
                       {"median_l2", {{names[0], ma}, {names[1], mb}}},
                       {"median_l2_ratio", mb > 0.0 ? json(ma / mb) : json(nullptr)}};
  if (!run.out.empty()) {
    ensure_dir(run.out);
    write_json(report, fs::path(run.out) / "compare.json");
  }
  if (run.json_out) {
    out << report.dump(2) << '\n';
  } else {
    for (std::size_t k = 0; k < 2; ++k) print_summary(out, names[k], summarize(all[k]));
    out << "median l2 ratio " << names[0] << "/" << names[1] << " = " << (mb > 0.0 ? fmt("%.4f", ma / mb) : "n/a")
        << '\n';
  }
  return kExitOk;
}

int cmd_export(const DataOptions& data, const RunOptions& run, std::ostream& out) {
  const LoadedData d = load_data(data);
  Dataset part;
  part.samples = d.selected;
  part.num_classes = d.full.num_classes;
  part.provenance = d.full.provenance;
  write_png_dir(part, run.out);
  json manifest = dataset_manifest(part);
  manifest["source"] = d.info;
  write_json(manifest, fs::path(run.out) / "manifest.json");
  if (run.json_out) {
    out << manifest.dump(2) << '\n';
  } else {
    out << "wrote " << part.size() << " images to " << run.out << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Non-parametric diffusion adversarial attacks with runtime verification", "advad"};
  app.require_subcommand(1);

  DataOptions train_data, attack_data, bench_data, compare_data, export_data;
  AttackOptions attack_opts, bench_opts, compare_opts;
  RunOptions train_run, attack_run, verify_run, bench_run, compare_run, export_run;
  TrainConfig tcfg;
  std::string attack_model, bench_model, compare_model;
  bool trace = false, deep = false;
  std::vector<std::string> trace_dirs;
  std::string steps_list = "10,100,1000", xi_list = "8,4,2,1", methods = "advad,pgd";

  auto* train = app.add_subcommand("train", "train the built-in classifier");
  train_data.add(*train);
  train_run.add(*train, true, RunOptions::kSeeded);
  train->add_option("--epochs", tcfg.epochs)->capture_default_str();
  train->add_option("--lr", tcfg.learning_rate)->capture_default_str();
  train->add_option("--batch-size", tcfg.batch_size)->capture_default_str();
  train->add_option("--conv1", tcfg.conv1)->capture_default_str();
  train->add_option("--conv2", tcfg.conv2)->capture_default_str();

  auto* attack = app.add_subcommand("attack", "attack every selected image");
  attack->add_option("--model", attack_model, "ADVM checkpoint")->required();
  attack_data.add(*attack);
  attack_data.add_split(*attack);
  attack_opts.add(*attack, true);
  attack_run.add(*attack, true, RunOptions::kBatch);
  attack->add_flag("--trace", trace, "write per-step JSON-lines traces");
  attack->add_flag("--deep-trace", deep, "also write every state tensor");

  auto* verify = app.add_subcommand("verify", "check stored deep traces");
  verify->add_option("traces", trace_dirs, "deep trace directories")->required();
  verify_run.add(*verify, false, RunOptions::kOutputOnly);

  auto* bench = app.add_subcommand("bench", "T sweep and xi sweep");
  bench->add_option("--model", bench_model, "ADVM checkpoint")->required();
  bench_data.add(*bench);
  bench_data.add_split(*bench);
  bench_opts.add(*bench, true);
  bench_run.add(*bench, false, RunOptions::kBatch);
  bench->add_option("--steps-list", steps_list)->capture_default_str();
  bench->add_option("--xi-list", xi_list)->capture_default_str();

  auto* compare = app.add_subcommand("compare", "paired comparison of two methods");
  compare->add_option("--model", compare_model, "ADVM checkpoint")->required();
  compare_data.add(*compare);
  compare_data.add_split(*compare);
  compare_opts.add(*compare, false);
  compare_run.add(*compare, false, RunOptions::kBatch);
  compare->add_option("--methods", methods, "two of advad, advadx, pgd, pgd-decay")->capture_default_str();

  auto* exp = app.add_subcommand("export", "write a dataset as a PNG directory");
  export_data.add(*exp);
  export_data.add_split(*exp);
  export_run.add(*exp, true, RunOptions::kOutputOnly);

  std::vector<const char*> argv{"advad"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(train_data, tcfg, train_run, out);
    if (attack->parsed()) return cmd_attack(attack_model, attack_data, attack_opts, attack_run, trace, deep, out);
    if (verify->parsed()) return cmd_verify(trace_dirs, verify_run, out);
    if (bench->parsed()) return cmd_bench(bench_model, bench_data, bench_opts, bench_run, steps_list, xi_list, out);
    if (compare->parsed()) return cmd_compare(compare_model, compare_data, compare_opts, compare_run, methods, out);
    if (exp->parsed()) return cmd_export(export_data, export_run, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    const bool usage = e.code() == ErrorCode::kInvalidArgument || e.code() == ErrorCode::kInvalidRange;
    return usage ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace advad
