// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <deque>

#include "omni_emotion/backends.hpp"
#include "omni_emotion/error.hpp"
#include "omni_emotion/log.hpp"
#include "test_support.hpp"

namespace omni {
namespace {

BackendDescriptor judge_descriptor(int retries = 2) {
  BackendDescriptor d;
  d.backend_id = "j";
  d.capability = Capability::JUDGE;
  d.max_retries = retries;
  return d;
}

class QueueJudge final : public Judge {
 public:
  QueueJudge(BackendDescriptor d, std::deque<RawJudgeResponse> replies) : Judge(std::move(d)), replies_(replies) {}
  int calls = 0;

 protected:
  RawJudgeResponse do_judge(const std::string&, const std::vector<std::string>&) override {
    ++calls;
    auto r = replies_.front();
    if (replies_.size() > 1) replies_.pop_front();
    return r;
  }

 private:
  std::deque<RawJudgeResponse> replies_;
};

class QuietLogs : public ::testing::Test {
 protected:
  void SetUp() override { set_log_level(LogLevel::kOff); }
  void TearDown() override { set_log_level(LogLevel::kWarning); }
};

TEST(ScoreGrammar, AcceptsFirstIntegerInRange) {
  EXPECT_EQ(parse_judge_score("Score: 7").score, 7);
  EXPECT_EQ(parse_judge_score("10").score, 10);
  EXPECT_EQ(parse_judge_score("0 out of 10").score, 0);
  EXPECT_EQ(parse_judge_score("clip_007 gets 4").score, 4);
  EXPECT_EQ(parse_judge_score("I'd say 8, maybe 9").score, 8);
}

TEST(ScoreGrammar, RejectsBadFirstNumber) {
  EXPECT_FALSE(parse_judge_score("Score: 11").score);
  EXPECT_FALSE(parse_judge_score("Score: -3").score);
  EXPECT_FALSE(parse_judge_score("Score: 7.5").score);
  EXPECT_FALSE(parse_judge_score("no number here").score);
  EXPECT_FALSE(parse_judge_score("100").score);
  EXPECT_FALSE(parse_judge_score("").error.empty());
}

TEST_F(QuietLogs, JudgeRetriesUntilScoreAppears) {
  QueueJudge j(judge_descriptor(2), {{"hmm", std::nullopt, {}}, {"Score: 6", std::nullopt, {}}});
  const auto r = j.judge("Task: alignment-score", {}, true);
  EXPECT_EQ(r.score, 6);
  EXPECT_EQ(j.calls, 2);
}

TEST_F(QuietLogs, JudgeRaisesScoringErrorAfterRetries) {
  QueueJudge j(judge_descriptor(2), {{"no idea", std::nullopt, {}}});
  EXPECT_THROW(j.judge("p", {}, true), ScoringError);
  EXPECT_EQ(j.calls, 3);
}

TEST_F(QuietLogs, StructuredScoreWinsAndIsRangeChecked) {
  QueueJudge ok(judge_descriptor(0), {{"text says 2", 9, {}}});
  EXPECT_EQ(ok.judge("p", {}, true).score, 9);
  QueueJudge bad(judge_descriptor(0), {{"Score: 3", 12, {}}});
  EXPECT_THROW(bad.judge("p", {}, true), ScoringError);
}

TEST(Judge, UnscoredCallNeedsText) {
  QueueJudge j(judge_descriptor(0), {{"  ", std::nullopt, {}}});
  EXPECT_THROW(j.judge("p", {}), ProtocolError);
  EXPECT_THROW(j.judge(" ", {}), PreconditionError);
}

TEST(Descriptor, Validation) {
  BackendDescriptor d = judge_descriptor();
  EXPECT_NO_THROW(d.validate());
  d.max_retries = -1;
  EXPECT_THROW(d.validate(), ValidationError);
  const auto j = json{{"backend_id", "v"}, {"capability", "VIDEO_DESCRIBE"}, {"timeout_s", 5}};
  const auto parsed = descriptor_from_json(j);
  EXPECT_EQ(parsed.capability, Capability::VIDEO_DESCRIBE);
  EXPECT_DOUBLE_EQ(parsed.timeout_s, 5.0);
}

TEST(Mocks, ScriptedJudgeRulesAndTasks) {
  auto script = std::make_shared<ScriptTable>(ScriptTable::from_json(
      json{{"judge",
            {{"rules", json::array({{{"match", {"alpha", "beta"}}, {"response", "Score: 9"}}})},
             {"by_task", {{"alignment-score", "Score: 3"}}}}}}));
  auto judge = make_mock_judge(judge_descriptor(), script);
  EXPECT_EQ(judge->judge("Task: alignment-score\nalpha", {"beta"}, true).score, 9);
  EXPECT_EQ(judge->judge("Task: alignment-score\nalpha", {}, true).score, 3);
  EXPECT_EQ(judge->judge("Task: consistency-check", {}).verdict_text, "CONSISTENT");
}

TEST(Mocks, SilentAudioHasNoTranscript) {
  BackendDescriptor d;
  d.backend_id = "a";
  d.capability = Capability::AUDIO_ANALYZE;
  auto a = make_mock_audio_analyzer(d, std::make_shared<ScriptTable>());
  Waveform w;
  w.samples.assign(1600, 0.0f);
  const auto r = a->analyze_audio(w);
  EXPECT_TRUE(r.transcript.empty());
  EXPECT_FALSE(r.caption.empty());
}

TEST(Mocks, VideoDescriberNeedsFrames) {
  BackendDescriptor d;
  d.backend_id = "v";
  d.capability = Capability::VIDEO_DESCRIBE;
  auto v = make_mock_video_describer(d, std::make_shared<ScriptTable>());
  EXPECT_THROW(v->describe_video({}, "describe"), PreconditionError);
}

TEST(Registry, CapabilityAndIdChecks) {
  auto reg = make_registry(json::object(), ".");
  EXPECT_EQ(reg->ids().size(), 6u);
  EXPECT_NO_THROW(reg->judge("mock-judge"));
  EXPECT_THROW(reg->judge("mock-video"), ConfigError);
  EXPECT_THROW(reg->video("nope"), ConfigError);
}

TEST(Registry, DuplicateIdsRejected) {
  BackendRegistry reg;
  reg.add(make_mock_judge(judge_descriptor(), std::make_shared<ScriptTable>()));
  EXPECT_THROW(reg.add(make_mock_judge(judge_descriptor(), std::make_shared<ScriptTable>())), ConfigError);
}

TEST(Registry, BadModeAndMissingEndpoint) {
  EXPECT_THROW(make_registry(json{{"mode", "grpc"}}, "."), ConfigError);
  EXPECT_THROW(make_registry(json{{"mode", "http"}}, "."), ConfigError);
}

TEST(Registry, EnvironmentKeys) {
  EXPECT_EQ(env_key_for("mock-judge", "ENDPOINT"), "OMNI_BACKEND_MOCK_JUDGE_ENDPOINT");
  EXPECT_EQ(env_key_for("a.b", "API_KEY"), "OMNI_BACKEND_A_B_API_KEY");
  ::setenv("OMNI_BACKEND_MOCK_JUDGE_ENDPOINT", "http://127.0.0.1:1/x", 1);
  auto reg = make_registry(json::object(), ".");
  EXPECT_EQ(reg->get("mock-judge").descriptor().endpoint, "http://127.0.0.1:1/x");
  ::unsetenv("OMNI_BACKEND_MOCK_JUDGE_ENDPOINT");
}

}  // namespace
}  // namespace omni
