// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include "omni_emotion/corpus.hpp"
#include "omni_emotion/error.hpp"
#include "test_support.hpp"

namespace omni {
namespace {

ReasoningAnnotation make_record(const std::string& id, SourceDataset src, int score) {
  ReasoningAnnotation r;
  r.clip_id = id;
  r.source_dataset = src;
  r.evidence = {{EvidenceKind::VISUAL_GLOBAL, "A person stands by a window.", "mock-video", std::nullopt},
                {EvidenceKind::FACIAL, "Brows raised.", "mock-face", std::string(id + "#t0")}};
  r.reason = "The raised brows suggest surprise.";
  r.open_vocab_labels = {"surprised"};
  r.intensity = 3;
  r.alignment_score = score;
  r.review_status = ReviewStatus::SELF_REVIEWED;
  return r;
}

TEST(Corpus, NormalizeLabels) {
  EXPECT_EQ(normalize_labels({" Happy", "happy", "SAD ", ""}), (LabelSet{"happy", "sad"}));
}

TEST(Corpus, EnumRoundTrips) {
  for (auto s : {SourceDataset::DFEW, SourceDataset::MAFW, SourceDataset::MER24, SourceDataset::CAER,
                 SourceDataset::AFEW_VA, SourceDataset::FERV39K, SourceDataset::RAVDESS}) {
    EXPECT_EQ(parse_source_dataset(to_string(s)), s);
  }
  EXPECT_THROW(parse_source_dataset("IMDB"), FormatError);
  for (auto s : {ReviewStatus::UNREVIEWED, ReviewStatus::SELF_REVIEWED, ReviewStatus::HUMAN_APPROVED,
                 ReviewStatus::HUMAN_REJECTED, ReviewStatus::HUMAN_EDITED}) {
    EXPECT_EQ(parse_review_status(to_string(s)), s);
  }
}

TEST(Corpus, AnnotationValidation) {
  auto r = make_record("a", SourceDataset::DFEW, 7);
  EXPECT_NO_THROW(r.validate());
  auto bad = r;
  bad.intensity = 6;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = r;
  bad.open_vocab_labels.clear();
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = r;
  bad.open_vocab_labels = {"Happy"};
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = r;
  bad.alignment_score = 11;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = r;
  bad.evidence[1].tracklet_id.reset();
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Corpus, ClipValidation) {
  MediaClip c{"c", SourceDataset::DFEW, "synthetic://c", 2.0, 25.0, std::string("happy"), std::nullopt};
  EXPECT_NO_THROW(c.validate());
  c.duration_s = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c.duration_s = 2;
  c.fps = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Corpus, ManifestRoundTripIsExact) {
  testing::TempDir dir;
  DatasetManifest m;
  m.name = "SRE";
  m.records = {make_record("b", SourceDataset::MAFW, 6), make_record("a", SourceDataset::DFEW, 9)};
  m.records[0].audit.push_back({"rev1", "2026-01-01T00:00:00Z", "EDIT", ReviewStatus::SELF_REVIEWED, "old",
                                {"sad"}, 2});
  m.recount();
  m.provenance = {5, 11, {"mock-judge", "mock-video"}, "2026-01-01T00:00:00Z", "abc"};
  const auto path = write_manifest(m, dir / "sre.jsonl");
  const DatasetManifest back = read_manifest(path);
  EXPECT_EQ(back.records.front().clip_id, "a");  // sorted by clip_id
  EXPECT_EQ(back.per_source_counts, m.per_source_counts);
  EXPECT_EQ(back.provenance, m.provenance);
  DatasetManifest sorted = m;
  std::sort(sorted.records.begin(), sorted.records.end(),
            [](const auto& x, const auto& y) { return x.clip_id < y.clip_id; });
  EXPECT_EQ(back, sorted);
  EXPECT_EQ(back.records[1].version(), 1);
  EXPECT_TRUE(std::filesystem::exists(header_path_for(path)));
}

TEST(Corpus, ManifestRejectsBadCountsAndLowScores) {
  DatasetManifest m;
  m.name = "SRE";
  m.records = {make_record("a", SourceDataset::DFEW, 9)};
  m.per_source_counts = {{SourceDataset::DFEW, 2}};
  EXPECT_THROW(m.validate(), ValidationError);
  m.recount();
  EXPECT_NO_THROW(m.validate());
  m.records[0].alignment_score = 4;
  EXPECT_THROW(m.validate(), ValidationError);
}

TEST(Corpus, PublishedSourceCountsSum) {
  const std::map<SourceDataset, std::int64_t> counts = {
      {SourceDataset::FERV39K, 10302}, {SourceDataset::MAFW, 5006},    {SourceDataset::DFEW, 3700},
      {SourceDataset::CAER, 2903},     {SourceDataset::AFEW_VA, 1176}, {SourceDataset::MER24, 1050}};
  EXPECT_EQ(total_count(counts), 24137);
}

TEST(Corpus, ReadClipsReportsLineNumbers) {
  testing::TempDir dir;
  const auto p = dir / "clips.jsonl";
  {
    std::ofstream f(p);
    f << R"({"clip_id":"a","source_dataset":"DFEW","media_uri":"synthetic://a","duration_s":1,"fps":25})" << "\n";
    f << "\n";
    f << R"({"clip_id":"b","source_dataset":"DFEW","media_uri":"synthetic://b","duration_s":-1,"fps":25})" << "\n";
  }
  try {
    read_clips(p);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Corpus, ReadClipsRejectsDuplicates) {
  testing::TempDir dir;
  const auto p = dir / "clips.jsonl";
  {
    std::ofstream f(p);
    for (int i = 0; i < 2; ++i)
      f << R"({"clip_id":"a","source_dataset":"DFEW","media_uri":"synthetic://a","duration_s":1,"fps":25})" << "\n";
  }
  EXPECT_THROW(read_clips(p), ParseError);
}

TEST(Corpus, ClipsRoundTrip) {
  testing::TempDir dir;
  const auto clips = read_clips(testing::fixture("curate12/clips.jsonl"));
  ASSERT_EQ(clips.size(), 12u);
  write_clips(clips, dir / "c.jsonl");
  EXPECT_EQ(read_clips(dir / "c.jsonl"), clips);
}

}  // namespace
}  // namespace omni
