// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>

#include "omni_emotion/cli.hpp"
#include "omni_emotion/corpus.hpp"
#include "omni_emotion/util.hpp"
#include "test_support.hpp"

namespace omni {
namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "omni-emotion");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string fx(const std::string& rel) { return testing::fixture(rel).string(); }

/// Curation config pointing at the fixture inputs, with a patch applied to
/// the curate section.
std::string curate_config(const testing::TempDir& dir, const json& patch) {
  json j = json::parse(read_file(testing::fixture("curate12/config.json")));
  j["backends"]["script"] = fx("curate12/mock_script.json");
  j["curate"]["clips"] = fx("curate12/clips.jsonl");
  j["curate"].merge_patch(patch);
  const auto path = dir / "config.json";
  write_file_atomic(path, j.dump(1));
  return path.string();
}

TEST(Cli, CurateWritesManifestsAndIsReproducible) {
  testing::TempDir dir;
  const auto a = cli({"curate", "-c", fx("curate12/config.json"), "--output-dir", (dir / "a").string(),
                      "--log-level", "off"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("SRE 8, HRE 3"), std::string::npos) << a.out;
  for (const char* f : {"sre.jsonl", "sre.header.json", "hre.jsonl", "run_report.json", "resolved_config.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "a" / f)) << f;
  }
  const auto b = cli({"curate", "-c", fx("curate12/config.json"), "--output-dir", (dir / "b").string(),
                      "--workers", "3", "--log-level", "off"});
  ASSERT_EQ(b.code, 0) << b.err;
  for (const char* f : {"sre.jsonl", "hre.jsonl", "run_report.json"}) {
    EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
  }
  EXPECT_EQ(read_manifest(dir / "a" / "sre.jsonl").records.size(), 8u);
}

TEST(Cli, UsageErrorsExitTwo) {
  testing::TempDir dir;
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"train", "-c", fx("train/config.json"), "--phase", "4"}).code, 2);
  EXPECT_EQ(cli({"curate"}).code, 2);
  EXPECT_EQ(cli({"eval", "-c", fx("eval/config.json"), "--task", "bleu"}).code, 2);
  EXPECT_EQ(cli({"curate", "-c", fx("curate12/config.json"), "--registry", "grpc"}).code, 2);

  const auto unknown = cli({"curate", "-c", curate_config(dir, json{{"roles", {{"judge", "no-such-judge"}}}}),
                            "--output-dir", (dir / "o").string()});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("no-such-judge"), std::string::npos) << unknown.err;
  EXPECT_FALSE(std::filesystem::exists(dir / "o" / "sre.jsonl"));

  const auto missing = cli({"curate", "-c", curate_config(dir, json{{"clips", nullptr}}), "--output-dir",
                            (dir / "o").string()});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("curate.clips"), std::string::npos) << missing.err;
}

TEST(Cli, MissingInputsExitOneAndNameTheFile) {
  testing::TempDir dir;
  const auto r = cli({"train", "-c", fx("train/config.json"), "--phase", "3", "--output-dir", dir.path().string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("sre.jsonl"), std::string::npos) << r.err;

  write_file_atomic(dir / "clips.jsonl", read_file(testing::fixture("curate12/clips.jsonl")) + "{broken\n");
  const auto bad = cli({"curate", "-c", curate_config(dir, json{{"clips", (dir / "clips.jsonl").string()}}),
                        "--output-dir", (dir / "o").string(), "--log-level", "off"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("line 13"), std::string::npos) << bad.err;
}

TEST(Cli, EvalWritesReports) {
  testing::TempDir dir;
  const auto ov = cli({"eval", "-c", fx("eval/config.json"), "--task", "emer-ov", "--output-dir",
                       dir.path().string(), "--log-level", "off"});
  ASSERT_EQ(ov.code, 0) << ov.err;
  EXPECT_NE(ov.out.find("avg: 56.25"), std::string::npos) << ov.out;
  const auto report = json::parse(read_file(dir / "emer_ov_report.json"));
  EXPECT_DOUBLE_EQ(report["metrics"]["precision"].get<double>(), 62.5);
  EXPECT_TRUE(std::filesystem::exists(dir / "emer_ov_report.csv"));

  const auto cls = cli({"eval", "-c", fx("eval/config.json"), "--task", "cls", "--output-dir", dir.path().string(),
                        "--log-level", "off"});
  ASSERT_EQ(cls.code, 0) << cls.err;
  EXPECT_NE(cls.out.find("UAR: 33.33"), std::string::npos) << cls.out;
  EXPECT_NE(cls.out.find("WAR: 50.00"), std::string::npos) << cls.out;

  const auto overlap = cli({"eval", "-c", fx("eval/config.json"), "--task", "overlap", "--output-dir",
                            dir.path().string(), "--log-level", "off"});
  ASSERT_EQ(overlap.code, 0) << overlap.err;
  EXPECT_NE(overlap.out.find("clue_overlap: 8.00"), std::string::npos) << overlap.out;
  EXPECT_NE(overlap.out.find("label_overlap: 9.00"), std::string::npos) << overlap.out;
}

TEST(Cli, TrainPhaseOneWritesCheckpointAndLog) {
  testing::TempDir dir;
  const auto r = cli({"train", "-c", fx("train/config.json"), "--phase", "1", "--output-dir", dir.path().string(),
                      "--log-level", "off"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "phase1.log.jsonl"));
  EXPECT_NE(r.out.find("checkpoint"), std::string::npos);
}

TEST(Cli, ReviewServeStartsAndStops) {
  testing::TempDir dir;
  ASSERT_EQ(cli({"curate", "-c", fx("curate12/config.json"), "--output-dir", (dir / "c").string(), "--log-level",
                 "off"})
                .code,
            0);
  json j = json::parse(read_file(testing::fixture("curate12/config.json")));
  j["review"]["store"] = (dir / "c" / "hre.jsonl").string();
  j["review"]["clips"] = fx("curate12/clips.jsonl");
  write_file_atomic(dir / "review.json", j.dump());
  const auto r = cli({"review-serve", "-c", (dir / "review.json").string(), "--port", "0", "--serve-seconds", "0.2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("3 pending"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("stopped"), std::string::npos);
}

}  // namespace
}  // namespace omni
