#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "advad/cli.hpp"
#include "advad/image.hpp"
#include "advad/report.hpp"

using namespace advad;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

const std::vector<std::string> kData{"--per-class", "20", "--size", "16", "--data-seed", "4"};

std::vector<std::string> with_data(std::vector<std::string> args) {
  args.insert(args.end(), kData.begin(), kData.end());
  return args;
}

fs::path root() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "advad_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Trains one small model for the whole suite.
const fs::path& model_path() {
  static const fs::path p = [] {
    const Outcome o = cli(with_data({"train", "--epochs", "3", "--out", (root() / "train").string()}));
    EXPECT_EQ(o.code, 0) << o.err;
    return root() / "train" / "model.advm";
  }();
  return p;
}

std::vector<std::string> attack_args(const fs::path& out) {
  return with_data({"attack", "--model", model_path().string(), "--steps", "10", "--limit", "3",
                    "--skip-misclassified", "false", "--out", out.string()});
}

json strip_timing(json j) {
  j.erase("timing");
  return j;
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"attack", "--out", "x"}).code, 2);  // --model is required
  EXPECT_EQ(cli({"train", "--out", (root() / "bad").string(), "--classes", "1"}).code, 2);
  EXPECT_EQ(cli({"help"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, RuntimeErrorsExitThree) {
  const Outcome missing = cli({"export", "--dataset", "/nonexistent/advad", "--out", (root() / "e").string()});
  EXPECT_EQ(missing.code, 3);
  EXPECT_NE(missing.err.find("not a directory"), std::string::npos);
  EXPECT_EQ(cli(with_data({"attack", "--model", "/nonexistent.advm", "--out", (root() / "m").string()})).code, 3);
}

TEST(Cli, TrainWritesModelReportAndLog) {
  ASSERT_TRUE(fs::exists(model_path()));
  const json report = read_json(root() / "train" / "train_report.json");
  EXPECT_EQ(report["command"], "train");
  EXPECT_EQ(report["history"].size(), 3u);
  std::ifstream log(root() / "train" / "train_log.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) {
    const json e = json::parse(line);
    EXPECT_EQ(e["epoch"], ++lines);
    EXPECT_TRUE(e.contains("mean_loss"));
  }
  EXPECT_EQ(lines, 3u);
}

TEST(Cli, AttackWritesOutputsAndIsDeterministic) {
  const fs::path a = root() / "attack_a", b = root() / "attack_b";
  const Outcome oa = cli(attack_args(a));
  ASSERT_EQ(oa.code, 0) << oa.err;
  std::vector<std::string> args_b = attack_args(b);
  args_b.push_back("--jobs");
  args_b.push_back("2");
  ASSERT_EQ(cli(args_b).code, 0);
  const json ra = read_json(a / "report.json"), rb = read_json(b / "report.json");
  EXPECT_EQ(strip_timing(ra).dump(), strip_timing(rb).dump());
  EXPECT_EQ(ra["verification"]["pass"], true);
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(a / "adv")) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 3u);
}

TEST(Cli, AttackJsonOutputParses) {
  std::vector<std::string> args = attack_args(root() / "attack_json");
  args.push_back("--json");
  args.push_back("--mode");
  args.push_back("pgd");
  const Outcome o = cli(args);
  ASSERT_EQ(o.code, 0) << o.err;
  const json j = json::parse(o.out);
  EXPECT_EQ(j["command"], "attack");
}

TEST(Cli, UseCamNeedsAdvadX) {
  std::vector<std::string> args = attack_args(root() / "cam");
  args.push_back("--use-cam");
  EXPECT_EQ(cli(args).code, 2);
}

TEST(Cli, VerifyDetectsCorruptedTrace) {
  const fs::path out = root() / "deep";
  std::vector<std::string> args = attack_args(out);
  args.push_back("--deep-trace");
  ASSERT_EQ(cli(args).code, 0);
  std::vector<fs::path> traces;
  for (const auto& e : fs::directory_iterator(out / "deep")) traces.push_back(e.path());
  ASSERT_EQ(traces.size(), 3u);
  std::sort(traces.begin(), traces.end());

  const Outcome good = cli({"verify", traces[0].string(), traces[1].string()});
  EXPECT_EQ(good.code, 0) << good.out << good.err;

  // Push one noise element far outside the projection radius at step 6.
  const fs::path eps_file = traces[2] / "step_00006_eps.advf";
  ImageTensor eps = read_raw_float(eps_file);
  eps[0] += 5.0;
  write_raw_float(eps, eps_file);
  const Outcome bad = cli({"verify", "--json", traces[2].string()});
  EXPECT_EQ(bad.code, 1);
  const json j = json::parse(bad.out);
  EXPECT_EQ(j["pass"], false);
}

TEST(Cli, BenchAndCompare) {
  const Outcome bad = cli(with_data({"bench", "--model", model_path().string(), "--steps-list", "5,x"}));
  EXPECT_EQ(bad.code, 2);
  const Outcome bench = cli(with_data({"bench", "--model", model_path().string(), "--steps-list", "3,6", "--xi-list",
                                       "8,2", "--limit", "2", "--json"}));
  ASSERT_EQ(bench.code, 0) << bench.err;
  EXPECT_NO_THROW(json::parse(bench.out));
  const Outcome cmp = cli(with_data({"compare", "--model", model_path().string(), "--methods", "advad,pgd", "--steps",
                                     "5", "--limit", "2", "--json"}));
  ASSERT_EQ(cmp.code, 0) << cmp.err;
  EXPECT_EQ(json::parse(cmp.out)["methods"].size(), 2u);
  EXPECT_EQ(cli(with_data({"compare", "--model", model_path().string(), "--methods", "advad"})).code, 2);
}

TEST(Cli, ExportWritesManifest) {
  const fs::path out = root() / "export";
  ASSERT_EQ(cli(with_data({"export", "--limit", "4", "--out", out.string()})).code, 0);
  const json m = read_json(out / "manifest.json");
  EXPECT_EQ(m["samples"].size(), 4u);
}
