// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <atomic>

#include "omni_emotion/error.hpp"
#include "omni_emotion/log.hpp"
#include "omni_emotion/review_service.hpp"
#include "test_support.hpp"

#include <httplib.h>

namespace omni {
namespace {

ReasoningAnnotation pending(const std::string& id) {
  ReasoningAnnotation r;
  r.clip_id = id;
  r.source_dataset = SourceDataset::DFEW;
  r.evidence = {{EvidenceKind::VISUAL_GLOBAL, "scene", "mock-video", std::nullopt}};
  r.reason = "reason for " + id;
  r.open_vocab_labels = {"happy"};
  r.intensity = 2;
  r.alignment_score = 3;
  r.review_status = ReviewStatus::SELF_REVIEWED;
  return r;
}

class ReviewFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    set_log_level(LogLevel::kOff);
    DatasetManifest m;
    m.name = "HRE";
    m.records = {pending("c1"), pending("c2"), pending("c3")};
    m.recount();
    path = write_manifest(m, dir / "hre.jsonl");
    for (const auto& r : m.records) {
      clips[r.clip_id] = MediaClip{r.clip_id, SourceDataset::DFEW, "synthetic://" + r.clip_id + "?w=8&h=6", 2.0,
                                   25.0, std::string("happy"), std::string("I am fine.")};
    }
  }
  void TearDown() override { set_log_level(LogLevel::kWarning); }

  std::unique_ptr<ReviewStore> make_store() {
    ReviewStore::Options o;
    o.lease_seconds = 600;
    o.clock = [this] { return now.load(); };
    return std::make_unique<ReviewStore>(path, clips, o);
  }

  testing::TempDir dir;
  std::filesystem::path path;
  std::map<std::string, MediaClip> clips;
  std::atomic<std::int64_t> now{1000};
};

TEST_F(ReviewFixture, LeasesKeepReviewersDisjoint) {
  auto store = make_store();
  const auto a = store->next("alice");
  const auto b = store->next("bob");
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->clip_id, "c1");
  EXPECT_EQ(b->clip_id, "c2");
  EXPECT_EQ(store->next("alice")->clip_id, "c1");
  now += 601;
  EXPECT_EQ(store->next("carol")->clip_id, "c1");
}

TEST_F(ReviewFixture, VersionConflictAndStateErrors) {
  auto store = make_store();
  EXPECT_THROW(store->review("c1", ReviewVerdict::approve(), "alice", 5), VersionConflict);
  const auto rec = store->review("c1", ReviewVerdict::approve(), "alice", 0);
  EXPECT_EQ(rec.review_status, ReviewStatus::HUMAN_APPROVED);
  EXPECT_EQ(rec.audit.back().timestamp, "1970-01-01T00:16:40Z");
  EXPECT_THROW(store->review("c1", ReviewVerdict::approve(), "alice", 1), StateError);
  EXPECT_EQ(store->pending(), 2u);
}

TEST_F(ReviewFixture, FlushPersistsAndExportDropsRejected) {
  {
    auto store = make_store();
    store->review("c1", ReviewVerdict::approve(), "alice", 0);
    store->review("c2", ReviewVerdict::reject(), "alice", 0);
    store->review("c3", ReviewVerdict::edit("Edited.", std::nullopt, std::nullopt), "bob", 0);
    EXPECT_TRUE(store->dirty());
    const auto exported = store->export_manifest("HRE");
    ASSERT_EQ(exported.records.size(), 2u);
    EXPECT_EQ(exported.records[1].reason, "Edited.");
  }
  const auto back = read_manifest(path);
  EXPECT_EQ(back.records[0].review_status, ReviewStatus::HUMAN_APPROVED);
  EXPECT_EQ(back.records[1].review_status, ReviewStatus::HUMAN_REJECTED);
  EXPECT_EQ(back.records[2].review_status, ReviewStatus::HUMAN_EDITED);
  auto store = make_store();
  EXPECT_FALSE(store->next("anyone"));
}

TEST(ReviewRequestParsing, Rules) {
  const auto r = parse_review_request(
      json{{"verdict", "EDIT"}, {"edits", {{"labels", {"Sad"}}}}, {"reviewer_id", "x"}, {"record_version", 0}});
  EXPECT_EQ(r.verdict.kind, VerdictKind::EDIT);
  EXPECT_EQ(*r.verdict.new_labels, (LabelSet{"sad"}));
  EXPECT_THROW(parse_review_request(json{{"verdict", "APPROVE"},
                                         {"edits", {{"intensity", 2}}},
                                         {"reviewer_id", "x"},
                                         {"record_version", 0}}),
               FormatError);
  EXPECT_THROW(parse_review_request(json{{"verdict", "APPROVE"}}), FormatError);
  EXPECT_THROW(parse_review_request(json::array()), FormatError);
}

class ReviewHttp : public ReviewFixture {
 protected:
  void SetUp() override {
    ReviewFixture::SetUp();
    store = make_store();
    ReviewServerOptions o;
    o.token = "tok";
    server = std::make_unique<ReviewServer>(*store, o);
    port = server->start();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_bearer_token_auth("tok");
  }
  void TearDown() override {
    server.reset();
    store.reset();
    ReviewFixture::TearDown();
  }

  httplib::Result post_review(const std::string& id, const json& body) {
    return client->Post("/api/record/" + id + "/review", body.dump(), "application/json");
  }

  std::unique_ptr<ReviewStore> store;
  std::unique_ptr<ReviewServer> server;
  std::unique_ptr<httplib::Client> client;
  int port = 0;
};

TEST_F(ReviewHttp, AuthIsRequired) {
  httplib::Client anon("127.0.0.1", port);
  auto res = anon.Get("/api/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 401);
  EXPECT_EQ(client->Get("/api/health")->status, 200);
}

TEST_F(ReviewHttp, QueueRecordReviewRoundTrip) {
  EXPECT_EQ(client->Get("/api/queue/next")->status, 400);
  auto res = client->Get("/api/queue/next?reviewer=alice");
  ASSERT_EQ(res->status, 200);
  const auto payload = json::parse(res->body);
  EXPECT_EQ(payload["record"]["clip_id"], "c1");
  EXPECT_EQ(payload["record_version"], 0);
  EXPECT_EQ(payload["media"]["ground_truth_label"], "happy");
  EXPECT_EQ(payload["media"]["subtitle"], "I am fine.");

  res = post_review("c1", json{{"verdict", "APPROVE"}, {"reviewer_id", "alice"}, {"record_version", 0}});
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["record"]["review_status"], "HUMAN_APPROVED");
  EXPECT_EQ(json::parse(client->Get("/api/record/c1")->body)["record_version"], 1);

  res = post_review("c1", json{{"verdict", "REJECT"}, {"reviewer_id", "bob"}, {"record_version", 0}});
  EXPECT_EQ(res->status, 409);
  res = post_review("c1", json{{"verdict", "REJECT"}, {"reviewer_id", "bob"}, {"record_version", 1}});
  EXPECT_EQ(res->status, 422);
}

TEST_F(ReviewHttp, ErrorsMapToStatusCodes) {
  EXPECT_EQ(client->Get("/api/record/zzz")->status, 404);
  EXPECT_EQ(post_review("zzz", json::object())->status, 404);
  EXPECT_EQ(client->Post("/api/record/c1/review", "{oops", "application/json")->status, 400);
  EXPECT_EQ(post_review("c1", json{{"verdict", "MAYBE"}, {"reviewer_id", "a"}, {"record_version", 0}})->status, 400);
  EXPECT_EQ(post_review("c1", json{{"verdict", "EDIT"}, {"reviewer_id", "a"}, {"record_version", 0}})->status, 422);
}

TEST_F(ReviewHttp, EmptyQueueGives204AndExportOmitsRejected) {
  for (const char* id : {"c1", "c2", "c3"}) {
    const std::string verdict = std::string(id) == "c2" ? "REJECT" : "APPROVE";
    ASSERT_EQ(post_review(id, json{{"verdict", verdict}, {"reviewer_id", "a"}, {"record_version", 0}})->status, 200);
  }
  EXPECT_EQ(client->Get("/api/queue/next?reviewer=alice")->status, 204);
  const auto body = client->Get("/api/export")->body;
  EXPECT_NE(body.find("\"c1\""), std::string::npos);
  EXPECT_EQ(body.find("\"c2\""), std::string::npos);
  EXPECT_NE(body.find("\"c3\""), std::string::npos);
}

TEST_F(ReviewHttp, MediaEndpoints) {
  auto frame = client->Get("/api/media/c1?kind=frame&t=0.5");
  ASSERT_EQ(frame->status, 200);
  EXPECT_EQ(decode_ppm(frame->body).width, 8);
  auto audio = client->Get("/api/media/c1?kind=audio");
  ASSERT_EQ(audio->status, 200);
  EXPECT_GT(decode_wav(audio->body).samples.size(), 0u);
  EXPECT_EQ(client->Get("/api/media/c1?kind=video")->status, 400);
  EXPECT_EQ(client->Get("/api/media/nope")->status, 404);
}

TEST_F(ReviewHttp, BusyPortRaisesIoError) {
  ReviewServerOptions o;
  o.port = port;
  ReviewServer second(*store, o);
  EXPECT_THROW(second.start(), IoError);
}

}  // namespace
}  // namespace omni
