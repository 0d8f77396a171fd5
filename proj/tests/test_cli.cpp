#include "doctest.h"

#include <cstdlib>
#include <string>
#include <vector>

#include "dermpipe/cli.hpp"
#include "dermpipe/csv.hpp"
#include "dermpipe/dataset.hpp"
#include "dermpipe/fileio.hpp"
#include "e2e_pipeline.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace dermpipe;
using testing::cli;

namespace {

std::string manifest_with_counts(const std::vector<std::pair<std::string, int>>& counts) {
  std::string text = "image,age_approx,anatom_site_general,sex,lesion_id,label\n";
  int n = 0;
  for (const auto& [label, count] : counts) {
    for (int i = 0; i < count; ++i, ++n) {
      text += "IMG_" + std::to_string(n) + ",45,head/neck,male,LES_" + std::to_string(n) + "," + label + "\n";
    }
  }
  return text;
}

}  // namespace

TEST_CASE("weights subcommand reproduces the worked example") {
  testing::TempDir dir;
  write_file_atomic(dir / "m.csv", manifest_with_counts({{"MEL", 50}, {"NV", 25}, {"BCC", 25}}));
  const auto r = cli({"--set", "loss.k=1", "weights", "--manifest", (dir / "m.csv").string(), "--out",
                      (dir / "w.csv").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(read_file(dir / "w.csv") == "class,weight\nMEL,2\nNV,4\nBCC,4\n");
}

TEST_CASE("synth is deterministic for a fixed seed") {
  testing::TempDir dir;
  const auto run = [&](const std::string& sub, const std::string& seed) {
    return cli({"--seed", seed, "synth", "--out", (dir / sub).string(), "--images", "24", "--test-images", "6",
                "--image-size", "48"});
  };
  REQUIRE(run("a", "3").code == kExitOk);
  REQUIRE(run("b", "3").code == kExitOk);
  REQUIRE(run("c", "4").code == kExitOk);
  const auto a = testing::snapshot(dir / "a");
  CHECK(a.size() == 24 + 6 + 5);
  CHECK(a == testing::snapshot(dir / "b"));
  CHECK(a.at("manifest.csv") != testing::snapshot(dir / "c").at("manifest.csv"));
}

TEST_CASE("synthetic meta data misses about the requested share") {
  testing::TempDir dir;
  REQUIRE(cli({"--seed", "11", "synth", "--out", (dir / "s").string(), "--images", "10000", "--no-images", "--features",
               "4", "--replicates", "1"})
              .code == kExitOk);
  const Manifest m = read_manifest((dir / "s" / "manifest.csv").string());
  CHECK(m.rows.size() == 10000);
  double missing = 0.0, fields = 0.0;
  for (const auto& row : m.rows) {
    if (row.source != Source::Main) continue;
    missing += !row.meta.age + !row.meta.site + !row.meta.sex;
    fields += 3.0;
  }
  CHECK(std::abs(missing / fields - 0.3) <= 0.02);
  CHECK_FALSE(std::filesystem::exists(dir / "s" / "images"));
}

TEST_CASE("evaluate reports S = 1 for perfect predictions and excludes UNK") {
  testing::TempDir dir;
  std::string truth = "image,label\n";
  std::string pred = "image,MEL,NV,BCC,AK,BKL,DF,VASC,SCC,UNK\n";
  for (int i = 0; i < kNumClasses; ++i) {
    truth += "x" + std::to_string(i) + "," + std::string(kClassNames[i]) + "\n";
    pred += "x" + std::to_string(i);
    for (int c = 0; c < kNumClasses; ++c) pred += c == i ? ",1" : ",0";
    pred += "\n";
  }
  write_file_atomic(dir / "truth.csv", truth);
  write_file_atomic(dir / "pred.csv", pred);
  const auto r = cli({"--json", "evaluate", "--pred", (dir / "pred.csv").string(), "--truth",
                      (dir / "truth.csv").string(), "--out", (dir / "rep").string()});
  REQUIRE(r.code == kExitOk);
  const auto stdout_json = nlohmann::json::parse(r.out);
  CHECK(stdout_json.at("S").get<double>() == 1.0);
  const auto summary = nlohmann::json::parse(read_file(dir / "rep" / "summary.json"));
  CHECK(summary.at("S").get<double>() == 1.0);
  CHECK(summary.at("excluded_unk").get<int>() == 1);
  CHECK(summary.at("evaluated").get<int>() == 8);
  const CsvTable report = parse_csv(read_file(dir / "rep" / "class_report.csv"));
  CHECK(report.rows.size() == kNumClasses);
}

TEST_CASE("exit codes follow the failure class") {
  testing::TempDir dir;
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"no-such-command"}).code == kExitUsage);
  CHECK(cli({"weights", "--bogus-flag"}).code == kExitUsage);
  CHECK(cli({"weights"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);

  CHECK(cli({"weights", "--manifest", (dir / "absent.csv").string()}).code == kExitIo);
  write_file_atomic(dir / "bad.csv", "image,label\nx,MEL\n");
  CHECK(cli({"weights", "--manifest", (dir / "bad.csv").string()}).code == kExitValidation);
  write_file_atomic(dir / "m.csv", manifest_with_counts({{"MEL", 3}}));
  const auto r = cli({"--set", "head.nonsense=1", "weights", "--manifest", (dir / "m.csv").string()});
  CHECK(r.code == kExitValidation);
  CHECK(r.err.find("nonsense") != std::string::npos);
}

TEST_CASE("config file from the environment applies unless overridden") {
  testing::TempDir dir;
  write_file_atomic(dir / "m.csv", manifest_with_counts({{"MEL", 12}, {"NV", 12}}));
  write_file_atomic(dir / "env.ini", "[folds]\nm = 3\n");
  ::setenv("DERMPIPE_CONFIG", (dir / "env.ini").string().c_str(), 1);
  const auto r = cli({"--json", "split-folds", "--manifest", (dir / "m.csv").string(), "--out",
                      (dir / "f.csv").string()});
  const auto r2 = cli({"--json", "--set", "folds.m=4", "split-folds", "--manifest", (dir / "m.csv").string(), "--out",
                       (dir / "f4.csv").string()});
  ::unsetenv("DERMPIPE_CONFIG");
  REQUIRE(r.code == kExitOk);
  CHECK(nlohmann::json::parse(r.out).at("folds").get<int>() == 3);
  CHECK(parse_fold_file(read_file(dir / "f.csv")).folds == 3);
  REQUIRE(r2.code == kExitOk);
  CHECK(nlohmann::json::parse(r2.out).at("folds").get<int>() == 4);
}

TEST_CASE("a small pipeline runs end to end without touching its inputs") {
  testing::TempDir dir;
  testing::PipelineOptions o;
  o.images = 60;
  o.test_images = 12;
  o.image_size = 64;
  o.folds = 3;
  write_file_atomic(dir / "fast.ini", "[head]\nlearning_rate = 1e-3\nepochs = 5\nH = 16\nD = 32\n[tta]\ncrop = 32\ninput = 32\n");
  o.config = dir / "fast.ini";
  const testing::PipelineRun run = testing::run_pipeline(dir / "run", o);
  CHECK(run.cv_score >= 0.0);
  CHECK(run.cv_score <= 1.0);

  const auto corpus_before = testing::snapshot(dir / "run" / "corpus");
  std::filesystem::remove_all(dir / "run" / "pre");
  REQUIRE(cli({"preprocess", "--manifest", (dir / "run" / "corpus" / "manifest.csv").string(), "--images",
               (dir / "run" / "corpus" / "images").string(), "--out", (dir / "run" / "pre").string()})
              .code == kExitOk);
  CHECK(testing::snapshot(dir / "run" / "corpus") == corpus_before);

  const auto schedule = parse_csv(read_file(dir / "run" / "schedule_ss.csv"));
  CHECK(schedule.rows.size() == 60u * 36u);
  const auto rr = parse_csv(read_file(dir / "run" / "schedule_rr.csv"));
  CHECK(rr.rows.size() == 60u * 16u);
  const auto report = nlohmann::json::parse(read_file(dir / "run" / "ens" / "report.json"));
  CHECK(report.at("per_subset_scores").size() == 3);
}
