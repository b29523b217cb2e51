// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <random>

#include "omni_emotion/config.hpp"
#include "omni_emotion/error.hpp"
#include "omni_emotion/eval.hpp"
#include "omni_emotion/log.hpp"
#include "test_support.hpp"

namespace omni {
namespace {

using Groups = std::vector<std::vector<std::string>>;

// Brute force over group indices: a group "hits" a set when any member is in it.
std::pair<double, double> ov_oracle(const Groups& groups, const std::set<std::string>& y,
                                    const std::set<std::string>& y_hat) {
  int pred_groups = 0, truth_groups = 0, common = 0;
  for (const auto& g : groups) {
    bool in_y = false, in_hat = false;
    for (const auto& w : g) {
      in_y = in_y || y.count(w) > 0;
      in_hat = in_hat || y_hat.count(w) > 0;
    }
    pred_groups += in_hat;
    truth_groups += in_y;
    common += in_y && in_hat;
  }
  const double p = pred_groups == 0 ? 0.0 : static_cast<double>(common) / pred_groups;
  return {p, static_cast<double>(common) / truth_groups};
}

struct RandomCase {
  Groups groups;
  std::set<std::string> y, y_hat;
};

RandomCase random_case(std::mt19937_64& rng) {
  const int universe = 2 + static_cast<int>(rng() % 11);
  const int k = 1 + static_cast<int>(rng() % universe);
  RandomCase c;
  c.groups.resize(k);
  std::vector<std::string> words;
  for (int i = 0; i < universe; ++i) {
    words.push_back("w" + std::to_string(i));
    c.groups[i < k ? i : rng() % k].push_back(words.back());
  }
  while (c.y.empty()) {
    for (const auto& w : words) {
      if (rng() % 3 == 0) c.y.insert(w);
    }
  }
  for (const auto& w : words) {
    if (rng() % 3 == 0) c.y_hat.insert(w);
  }
  return c;
}

TEST(OvMetrics, WorkedExample) {
  const auto map = GroupMap::from_groups({{"happy", "joyful"}, {"sad"}, {"worried", "anxious"}, {"surprised"}});
  const auto s = ov_metrics({"happy", "surprised"}, {"joyful", "sad"}, map);
  EXPECT_DOUBLE_EQ(s.precision, 0.5);
  EXPECT_DOUBLE_EQ(s.recall, 0.5);
  const auto t = ov_metrics({"sad", "worried"}, {"Anxious"}, map);
  EXPECT_DOUBLE_EQ(t.precision, 1.0);
  EXPECT_DOUBLE_EQ(t.recall, 0.5);
  EXPECT_DOUBLE_EQ(t.avg, 0.75);
  const auto e = ov_metrics({"sad"}, {}, map);
  EXPECT_EQ(e.precision, 0.0);
  EXPECT_EQ(e.recall, 0.0);
  EXPECT_THROW(ov_metrics({}, {"sad"}, map), PreconditionError);
}

TEST(OvMetrics, UnknownLabelPolicies) {
  const auto singleton = GroupMap::from_groups({{"happy"}});
  const auto s = ov_metrics({"elated"}, {"elated", "happy"}, singleton);
  EXPECT_DOUBLE_EQ(s.precision, 0.5);
  EXPECT_DOUBLE_EQ(s.recall, 1.0);
  const auto strict = GroupMap::from_groups({{"happy"}}, UnknownLabelPolicy::ERROR);
  EXPECT_THROW(ov_metrics({"elated"}, {"happy"}, strict), ValidationError);
  EXPECT_THROW(GroupMap::from_groups({{"happy"}, {"Happy"}}), ValidationError);
}

TEST(OvMetrics, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(2026);
  for (int i = 0; i < 1000; ++i) {
    const auto c = random_case(rng);
    const auto map = GroupMap::from_groups(c.groups);
    const auto s = ov_metrics(LabelSet(c.y.begin(), c.y.end()), LabelSet(c.y_hat.begin(), c.y_hat.end()), map);
    const auto [p, r] = ov_oracle(c.groups, c.y, c.y_hat);
    ASSERT_NEAR(s.precision, p, 1e-12) << i;
    ASSERT_NEAR(s.recall, r, 1e-12) << i;
    ASSERT_NEAR(s.avg, (p + r) / 2, 1e-12) << i;
  }
}

TEST(OvMetrics, Properties) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    const auto c = random_case(rng);
    const LabelSet y(c.y.begin(), c.y.end());
    const LabelSet y_hat(c.y_hat.begin(), c.y_hat.end());
    const auto map = GroupMap::from_groups(c.groups);
    const auto s = ov_metrics(y, y_hat, map);
    ASSERT_GE(s.precision, 0.0);
    ASSERT_LE(s.precision, 1.0);
    ASSERT_GE(s.recall, 0.0);
    ASSERT_LE(s.recall, 1.0);
    const auto self = ov_metrics(y, y, map);
    ASSERT_EQ(self.precision, 1.0);
    ASSERT_EQ(self.recall, 1.0);
    // Adding a prediction from an already-hit truth group cannot lower recall.
    LabelSet more = y_hat;
    more.insert(*y.begin());
    ASSERT_GE(ov_metrics(y, more, map).recall, s.recall);
    // One group over the whole universe: any non-empty prediction is perfect.
    std::vector<std::string> all;
    for (const auto& g : c.groups) all.insert(all.end(), g.begin(), g.end());
    const auto coarse = ov_metrics(y, y_hat, GroupMap::from_groups({all}));
    if (!y_hat.empty()) {
      ASSERT_EQ(coarse.recall, 1.0);
      ASSERT_EQ(coarse.precision, 1.0);
    }
  }
}

TEST(OvMetrics, SplittingAGroupCanRaiseRecall) {
  const auto coarse = GroupMap::from_groups({{"a", "b"}, {"x"}});
  const auto fine = GroupMap::from_groups({{"a"}, {"b"}, {"x"}});
  const LabelSet y{"a", "b", "x"}, y_hat{"a", "b"};
  EXPECT_DOUBLE_EQ(ov_metrics(y, y_hat, coarse).recall, 1.0 / 2.0);
  EXPECT_DOUBLE_EQ(ov_metrics(y, y_hat, fine).recall, 2.0 / 3.0);
}

TEST(OvMetrics, ReportedAveragesAreMeansOfPrecisionAndRecall) {
  // Published rows, one decimal each: the average must equal the mean of the
  // two rounded columns up to their rounding error.
  const struct {
    double p, r, avg;
  } rows[] = {{47.5, 65.7, 56.6}, {61.3, 70.6, 65.9}};
  for (const auto& row : rows) EXPECT_LE(std::abs((row.p + row.r) / 2 - row.avg), 0.05 + 1e-9);
  EXPECT_NEAR(std::round((47.5 + 65.7) / 2 * 10) / 10, 56.6, 1e-9);
}

TEST(OvMetrics, BuiltinMapGroupsSynonyms) {
  const auto& m = GroupMap::builtin();
  EXPECT_EQ(m.group_of("happy"), m.group_of("joyful"));
  EXPECT_EQ(m.group_of("worried"), m.group_of("anxious"));
  EXPECT_NE(m.group_of("happy"), m.group_of("sad"));
  EXPECT_EQ(GroupMap::from_json(m.to_json()), m);
}

std::pair<double, double> uar_war_oracle(const std::vector<int>& pred, const std::vector<int>& truth, int k) {
  std::vector<std::vector<int>> confusion(k, std::vector<int>(k + 1, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) ++confusion[truth[i]][pred[i]];
  double recall_sum = 0.0;
  int present = 0, diag = 0;
  for (int c = 0; c < k; ++c) {
    int row = 0;
    for (int v : confusion[c]) row += v;
    diag += confusion[c][c];
    if (row == 0) continue;
    recall_sum += static_cast<double>(confusion[c][c]) / row;
    ++present;
  }
  return {recall_sum / present, static_cast<double>(diag) / truth.size()};
}

TEST(Classification, WorkedExample) {
  const auto s = classification_metrics({"happy", "happy", "happy", "sad"}, {"happy", "happy", "sad", "neutral"},
                                        {"happy", "sad", "neutral"});
  EXPECT_NEAR(s.uar, 1.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(s.war, 0.5);
  EXPECT_EQ(s.per_class_recall.at("happy"), 1.0);
  EXPECT_EQ(s.out_of_list, 0);
}

TEST(Classification, MatchesConfusionMatrixOracle) {
  std::mt19937_64 rng(99);
  set_log_level(LogLevel::kOff);
  for (int i = 0; i < 1000; ++i) {
    const int k = 2 + static_cast<int>(rng() % 7);
    const int n = 1 + static_cast<int>(rng() % 40);
    std::vector<std::string> classes;
    for (int c = 0; c < k; ++c) classes.push_back("class" + std::to_string(c));
    std::vector<int> p, t;
    std::vector<std::string> ps, ts;
    for (int j = 0; j < n; ++j) {
      t.push_back(static_cast<int>(rng() % k));
      // Index k stands for a label outside the list.
      p.push_back(static_cast<int>(rng() % (k + 1)));
      ts.push_back(classes[t.back()]);
      ps.push_back(p.back() == k ? "other" : classes[p.back()]);
    }
    const auto s = classification_metrics(ps, ts, classes);
    const auto [uar, war] = uar_war_oracle(p, t, k);
    ASSERT_NEAR(s.uar, uar, 1e-12) << i;
    ASSERT_NEAR(s.war, war, 1e-12) << i;
  }
  set_log_level(LogLevel::kWarning);
}

TEST(Classification, BalancedSetsGiveEqualUarAndWar) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> classes{"a", "b", "c", "d"};
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> t, p;
    const int per = 1 + static_cast<int>(rng() % 6);
    for (const auto& c : classes) {
      for (int j = 0; j < per; ++j) {
        t.push_back(c);
        p.push_back(classes[rng() % classes.size()]);
      }
    }
    const auto s = classification_metrics(p, t, classes);
    ASSERT_NEAR(s.uar, s.war, 1e-12);
  }
}

TEST(Classification, Preconditions) {
  EXPECT_THROW(classification_metrics({"a"}, {}, {"a"}), PreconditionError);
  EXPECT_THROW(classification_metrics({}, {}, {"a"}), PreconditionError);
  EXPECT_THROW(classification_metrics({"a"}, {"z"}, {"a"}), PreconditionError);
  set_log_level(LogLevel::kOff);
  const auto s = classification_metrics({"Z"}, {"A"}, {"a"});
  set_log_level(LogLevel::kWarning);
  EXPECT_EQ(s.out_of_list, 1);
  EXPECT_EQ(s.war, 0.0);
}

std::shared_ptr<ScriptTable> script(const json& judge) {
  auto s = std::make_shared<ScriptTable>();
  s->judge = judge;
  return s;
}

BackendDescriptor judge_descriptor() {
  BackendDescriptor d;
  d.backend_id = "mock-judge";
  d.capability = Capability::JUDGE;
  d.max_retries = 0;
  return d;
}

TEST(Overlap, ScoresAndFlagging) {
  auto judge = make_mock_judge(judge_descriptor(),
                               script(json{{"rules", json::array({{{"match", {"Task: clue-overlap", "Clip ID: a"}},
                                                                    {"response", "Score: 4\nfew cues"}},
                                                                   {{"match", {"Task: label-overlap", "Clip ID: a"}},
                                                                    {"response", "Score: 6\nclose"}}})},
                                           {"default", "no score here"}}));
  const auto s = overlap_scores("a", "pred", "ref", *judge);
  EXPECT_EQ(s.clue_overlap, 4);
  EXPECT_EQ(s.label_overlap, 6);
  EXPECT_NE(s.judge_rationale.find("few cues"), std::string::npos);
  EXPECT_THROW(overlap_scores("a", " ", "ref", *judge), PreconditionError);

  set_log_level(LogLevel::kOff);
  const auto report =
      evaluate_overlap({{"a", {}, {}, "pred"}, {"b", {}, {}, "pred"}, {"c", {}, {}, {}}},
                       {{"a", {}, {}, "ref"}, {"b", {}, {}, "ref"}, {"c", {}, {}, "ref"}}, *judge);
  set_log_level(LogLevel::kWarning);
  EXPECT_FALSE(report.per_sample[0].flagged);
  EXPECT_TRUE(report.per_sample[1].flagged);
  EXPECT_TRUE(report.per_sample[2].flagged);
  EXPECT_EQ(report.info["flagged"], 2);
  EXPECT_DOUBLE_EQ(report.metrics.at("clue_overlap"), 4.0);
  EXPECT_TRUE(report.to_json()["per_sample"][1]["flagged"].get<bool>());
}

TEST(Predictions, ErrorsCarryLineNumbers) {
  testing::TempDir dir;
  write_file_atomic(dir / "ok.jsonl", "{\"id\":\"a\",\"labels\":[\"x\"]}\n\n{\"id\":\"b\",\"label\":\"y\"}\n");
  const auto ok = read_predictions(dir / "ok.jsonl");
  ASSERT_EQ(ok.size(), 2u);
  EXPECT_EQ(*ok[1].label, "y");
  const auto line_of = [&](const std::string& body) {
    write_file_atomic(dir / "bad.jsonl", body);
    try {
      read_predictions(dir / "bad.jsonl");
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line_of("{\"id\":\"a\"}\n{oops\n"), 2u);
  EXPECT_EQ(line_of("{\"id\":\"a\"}\n{\"id\":\"b\"}\n{\"id\":\"a\"}\n"), 3u);
  EXPECT_EQ(line_of("[1]\n"), 1u);
  EXPECT_EQ(line_of("{\"labels\":[]}\n"), 1u);
}

class CountingJudge : public Judge {
 public:
  CountingJudge(std::string reply) : Judge(judge_descriptor()), reply_(std::move(reply)) {}
  int calls() const { return calls_; }

 protected:
  RawJudgeResponse do_judge(const std::string&, const std::vector<std::string>&) override {
    ++calls_;
    return {reply_, std::nullopt, {}};
  }

 private:
  std::string reply_;
  std::atomic<int> calls_{0};
};

TEST(JudgeGroupMap, GroupsSingletonsAndCache) {
  testing::TempDir dir;
  set_log_level(LogLevel::kOff);
  CountingJudge judge("Group: happy, joyful, unknownword\nGroup: sad\n");
  const auto cache = dir / "groups.json";
  const auto m = build_group_map_with_judge({"Happy", "joyful", "sad", "calm"}, judge, TemplateSet::builtin(), cache);
  EXPECT_EQ(m.group_of("happy"), m.group_of("joyful"));
  EXPECT_NE(m.group_of("sad"), m.group_of("calm"));
  EXPECT_FALSE(m.contains("unknownword"));
  EXPECT_EQ(m.num_groups(), 3);
  EXPECT_EQ(build_group_map_with_judge({"happy", "joyful", "sad", "calm"}, judge, TemplateSet::builtin(), cache), m);
  EXPECT_EQ(judge.calls(), 1);
  build_group_map_with_judge({"happy", "sad"}, judge, TemplateSet::builtin(), cache);
  EXPECT_EQ(judge.calls(), 2);

  CountingJudge twice("Group: a, b\nGroup: b\n");
  EXPECT_THROW(build_group_map_with_judge({"a", "b"}, twice, TemplateSet::builtin(), std::nullopt), ProtocolError);
  CountingJudge none("nothing useful");
  EXPECT_THROW(build_group_map_with_judge({"a"}, none, TemplateSet::builtin(), std::nullopt), ProtocolError);
  set_log_level(LogLevel::kWarning);
}

TEST(Fixture, ReportsMatchHandComputedValues) {
  set_log_level(LogLevel::kOff);
  const auto dir = testing::fixture("eval");
  const auto ov = evaluate_open_vocab(read_predictions(dir / "ov_predictions.jsonl"),
                                      read_predictions(dir / "ov_references.jsonl"), GroupMap::builtin());
  EXPECT_NEAR(ov.metrics.at("precision"), 62.5, 1e-9);
  EXPECT_NEAR(ov.metrics.at("recall"), 50.0, 1e-9);
  EXPECT_NEAR(ov.metrics.at("avg"), 56.25, 1e-9);

  const auto cls = evaluate_classification(read_predictions(dir / "cls_predictions.jsonl"),
                                           read_predictions(dir / "cls_references.jsonl"),
                                           {"happy", "sad", "neutral", "angry"});
  EXPECT_NEAR(cls.metrics.at("UAR"), 100.0 / 3.0, 1e-9);
  EXPECT_NEAR(cls.metrics.at("WAR"), 50.0, 1e-9);

  auto judge = make_mock_judge(judge_descriptor(),
                               std::make_shared<ScriptTable>(ScriptTable::load(dir / "mock_script.json")));
  const auto overlap = evaluate_overlap(read_predictions(dir / "overlap_predictions.jsonl"),
                                        read_predictions(dir / "overlap_references.jsonl"), *judge);
  set_log_level(LogLevel::kWarning);
  EXPECT_DOUBLE_EQ(overlap.metrics.at("clue_overlap"), 8.0);
  EXPECT_DOUBLE_EQ(overlap.metrics.at("label_overlap"), 9.0);
  EXPECT_NO_THROW(overlap.validate());
  EXPECT_NE(overlap.to_csv().find("r2"), std::string::npos);
}

TEST(Tasks, Names) {
  EXPECT_EQ(parse_eval_task("EMER-OV"), EvalTask::EMER_OV);
  EXPECT_EQ(parse_eval_task("cls"), EvalTask::EMOTION_CLS);
  EXPECT_THROW(parse_eval_task("bleu"), UsageError);
}

}  // namespace
}  // namespace omni
