#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dementia_r1/cli.hpp"

using namespace dr1;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "dementia-r1");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const fs::path& p) {
  const auto text = slurp(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run({}).code == 1);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"frobnicate"}).code == 1);
  const auto r = run({"gen-cohort", "--n", "5"});
  CHECK(r.code == 1);
  CHECK(r.err.find("--out") != std::string::npos);
  CHECK(run({"train", "--stage", "3", "--data", "x"}).code == 1);
}

TEST_CASE("gen-cohort") {
  TempDir tmp("dr1_cli_gen");
  auto r = run({"gen-cohort", "--n", "100", "--seed", "4", "--out", tmp / "c.jsonl"});
  REQUIRE(r.code == 0);
  CHECK(line_count(tmp / "c.jsonl") == 100);
  CHECK(fs::exists(tmp / "c.jsonl.config"));
  CHECK(run({"gen-cohort", "--n", "100", "--seed", "4", "--out", tmp / "d.jsonl"}).code == 0);
  CHECK(slurp(tmp / "c.jsonl") == slurp(tmp / "d.jsonl"));

  CHECK(run({"gen-cohort", "--n", "0", "--out", tmp / "empty.jsonl"}).code == 0);
  CHECK(fs::file_size(tmp / "empty.jsonl") == 0);

  CHECK(run({"gen-cohort", "--n", "10", "--profile", "adni", "--out", tmp / "a.jsonl"}).code == 0);
  CHECK(slurp(tmp / "a.jsonl").find("ADAS13") != std::string::npos);

  CHECK(run({"gen-cohort", "--n", "-3", "--out", tmp / "x.jsonl"}).code == 1);
  CHECK(run({"gen-cohort", "--profile", "mars", "--out", tmp / "x.jsonl"}).code == 1);
  CHECK(run({"gen-cohort", "--set", "cohort.bogus=1", "--out", tmp / "x.jsonl"}).code == 1);
  CHECK(run({"gen-cohort", "--n", "3", "--out", tmp / "c.jsonl/x.jsonl"}).code == 2);
}

TEST_CASE("config layers") {
  TempDir tmp("dr1_cli_layers");
  {
    std::ofstream cfg(tmp / "c.cfg");
    cfg << "cohort.n_patients = 7\nseed = 2\n";
  }
  REQUIRE(run({"gen-cohort", "--config", tmp / "c.cfg", "--out", tmp / "a.jsonl"}).code == 0);
  CHECK(line_count(tmp / "a.jsonl") == 7);
  REQUIRE(run({"gen-cohort", "--config", tmp / "c.cfg", "--n", "9", "--out", tmp / "b.jsonl"}).code == 0);
  CHECK(line_count(tmp / "b.jsonl") == 9);
  ::setenv("DR1_COHORT_N_PATIENTS", "4", 1);
  REQUIRE(run({"gen-cohort", "--config", tmp / "c.cfg", "--out", tmp / "e.jsonl"}).code == 0);
  CHECK(line_count(tmp / "e.jsonl") == 4);
  REQUIRE(run({"gen-cohort", "--set", "cohort.n_patients=6", "--out", tmp / "f.jsonl"}).code == 0);
  CHECK(line_count(tmp / "f.jsonl") == 6);
  ::unsetenv("DR1_COHORT_N_PATIENTS");
  {
    std::ofstream cfg(tmp / "bad.cfg");
    cfg << "this is not a pair\n";
  }
  CHECK(run({"gen-cohort", "--config", tmp / "bad.cfg", "--out", tmp / "g.jsonl"}).code == 1);
  CHECK(run({"gen-cohort", "--config", tmp / "nope.cfg", "--out", tmp / "g.jsonl"}).code == 2);
}

TEST_CASE("build-samples and train") {
  TempDir tmp("dr1_cli_pipeline");
  REQUIRE(run({"gen-cohort", "--n", "200", "--seed", "5", "--out", tmp / "c.jsonl"}).code == 0);

  auto r = run({"build-samples", "--cohort", tmp / "c.jsonl", "--seed", "5", "--run-dir", tmp / "data"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  for (const char* f : {"stage1_samples.jsonl", "stage2_samples.jsonl", "stage1_manifest.json",
                        "stage2_manifest.json", "audit.json", "summary.txt", "config.txt"})
    CHECK_MESSAGE(fs::exists(tmp.path / "data" / f), f);
  CHECK(slurp(tmp.path / "data" / "audit.json").find("\"passed\": true") != std::string::npos);
  CHECK(r.out.find("removed by length: 0") != std::string::npos);

  r = run({"build-samples", "--cohort", tmp / "c.jsonl", "--max-len", "40", "--run-dir", tmp / "short"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("removed by length: 0,") == std::string::npos);
  CHECK(slurp(tmp.path / "short" / "summary.txt") == r.out.substr(r.out.find('\n') + 1));

  r = run({"build-samples", "--cohort", tmp / "c.jsonl", "--run-dir", tmp / "data2", "--seed", "5"});
  REQUIRE(r.code == 0);
  CHECK(slurp(tmp.path / "data" / "stage1_samples.jsonl") ==
        slurp(tmp.path / "data2" / "stage1_samples.jsonl"));

  SUBCASE("corrupt cohort") {
    auto text = slurp(tmp / "c.jsonl");
    const auto second = text.find('\n') + 1;
    text.insert(second, "{not json\n");
    std::ofstream(tmp / "bad.jsonl") << text;
    r = run({"build-samples", "--cohort", tmp / "bad.jsonl", "--run-dir", tmp / "bad"});
    CHECK(r.code == 2);
    CHECK(r.err.find("line 2") != std::string::npos);
    CHECK(run({"build-samples", "--cohort", tmp / "absent.jsonl", "--run-dir", tmp / "bad"}).code == 2);
  }

  SUBCASE("two-stage training") {
    r = run({"train", "--stage", "1", "--data", tmp / "data", "--steps", "20", "--seed", "1",
             "--run-dir", tmp / "s1"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(line_count(tmp.path / "s1" / "history.jsonl") == 20);
    r = run({"train", "--stage", "2", "--data", tmp / "data", "--init", tmp / "s1/policy.ckpt",
             "--steps", "20", "--seed", "1", "--run-dir", tmp / "s2"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    for (const char* f : {"policy.ckpt", "history.jsonl", "curve.jsonl", "report.txt", "report.jsonl",
                          "config.txt"})
      CHECK_MESSAGE(fs::exists(tmp.path / "s2" / f), f);
    CHECK(slurp(tmp.path / "s2" / "report.txt").find("F1 score") != std::string::npos);

    r = run({"train", "--stage", "2", "--data", tmp / "data", "--init", tmp / "s1/policy.ckpt",
             "--steps", "20", "--seed", "1", "--run-dir", tmp / "s2b"});
    REQUIRE(r.code == 0);
    CHECK(slurp(tmp.path / "s2" / "history.jsonl") == slurp(tmp.path / "s2b" / "history.jsonl"));
    CHECK(slurp(tmp.path / "s2" / "policy.ckpt") == slurp(tmp.path / "s2b" / "policy.ckpt"));

    r = run({"train", "--stage", "2", "--data", tmp / "data", "--init", tmp / "s1/policy.ckpt",
             "--steps", "0", "--run-dir", tmp / "s2zero"});
    REQUIRE(r.code == 0);
    CHECK(slurp(tmp.path / "s2zero" / "policy.ckpt") == slurp(tmp.path / "s1" / "policy.ckpt"));
    CHECK(fs::file_size(tmp.path / "s2zero" / "history.jsonl") == 0);

    CHECK(run({"train", "--stage", "1", "--data", tmp / "data", "--init", tmp / "s1/policy.ckpt",
               "--run-dir", tmp / "x"}).code == 1);
    CHECK(run({"train", "--stage", "2", "--data", tmp / "data", "--init", tmp / "nothing.ckpt",
               "--run-dir", tmp / "x"}).code == 2);
    CHECK(run({"train", "--stage", "2", "--data", tmp / "data", "--lr", "-1", "--run-dir", tmp / "x"})
              .code == 1);
  }

  SUBCASE("tampered manifest trips the audit") {
    fs::copy(tmp.path / "data", tmp.path / "leaky");
    auto s1 = nlohmann::json::parse(slurp(tmp.path / "leaky" / "stage1_manifest.json"));
    const auto s2 = nlohmann::json::parse(slurp(tmp.path / "leaky" / "stage2_manifest.json"));
    REQUIRE_FALSE(s2.at("test_ids").empty());
    s1["train_ids"].push_back(s2.at("test_ids").front());
    std::ofstream(tmp.path / "leaky" / "stage1_manifest.json") << s1.dump(2);
    r = run({"train", "--stage", "1", "--data", tmp / "leaky", "--steps", "1", "--run-dir", tmp / "x"});
    CHECK(r.code == 3);
  }
}

TEST_CASE("experiment") {
  TempDir tmp("dr1_cli_experiment");
  const std::vector<std::string> small{"--set", "cohort.n_patients=150", "--set", "stage1.steps=20",
                                       "--set", "stage2.steps=20", "--set", "eval.interval=10",
                                       "--set", "model.hidden_width=8", "--set",
                                       "data.stage1_test_limit=200"};
  auto args = small;
  args.insert(args.begin(), {"experiment", "--seeds", "2", "--run-dir", tmp / "a"});
  auto r = run(args);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("grpo_grpo") != std::string::npos);
  CHECK(r.out.find("grpo_stage2_only") != std::string::npos);
  CHECK(fs::exists(tmp.path / "a" / "summary.jsonl"));
  CHECK(fs::exists(tmp.path / "a" / "config.txt"));

  args[4] = tmp / "b";
  REQUIRE(run(args).code == 0);
  for (const char* f : {"summary.txt", "summary.jsonl", "grpo_grpo.records.jsonl", "grpo_grpo.curves.jsonl"})
    CHECK_MESSAGE(slurp(tmp.path / "a" / f) == slurp(tmp.path / "b" / f), f);

  auto one = small;
  one.insert(one.begin(), {"experiment", "--seeds", "1", "--arms", "grpo_stage2_only", "--run-dir", tmp / "c"});
  r = run(one);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("± 0.00") != std::string::npos);

  auto bad = small;
  bad.insert(bad.begin(), {"experiment", "--arms", "grpo_grpo,dpo", "--run-dir", tmp / "d"});
  CHECK(run(bad).code == 1);

  auto out_dir = small;
  out_dir.insert(out_dir.begin(), {"experiment", "--seeds", "1", "--out-dir", tmp / "runs"});
  REQUIRE(run(out_dir).code == 0);
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(tmp.path / "runs")) {
    ++dirs;
    const auto name = e.path().filename().string();
    CHECK(name.size() == 16 + 1 + 16);
    CHECK(name[8] == 'T');
    CHECK(name[15] == 'Z');
  }
  CHECK(dirs == 1);
}
