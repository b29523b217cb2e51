// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "omni_emotion/error.hpp"
#include "omni_emotion/templates.hpp"
#include "test_support.hpp"

namespace omni {
namespace {

TEST(Templates, RenderBindsEveryPlaceholder) {
  EXPECT_EQ(render_template("a {x} b {y}", {{"x", "1"}, {"y", "2"}}), "a 1 b 2");
  EXPECT_EQ(render_template("{x}{x}", {{"x", "ab"}}), "abab");
  EXPECT_THROW(render_template("a {x}", {}), ConfigError);
  EXPECT_THROW(render_template("a {x", {{"x", "1"}}), ConfigError);
}

TEST(Templates, BuiltinsArePresentAndTagged) {
  const auto& t = TemplateSet::builtin();
  for (const char* name : {"alignment_score", "clue_overlap", "consistency_check", "face_describe", "label_grouping",
                           "label_overlap", "reasoning_synthesis", "video_describe"}) {
    ASSERT_TRUE(t.contains(name)) << name;
  }
  EXPECT_NE(t.get("alignment_score").find("Task: alignment-score"), std::string::npos);
  EXPECT_THROW(t.get("nope"), ConfigError);
}

TEST(Templates, HashTracksContent) {
  TemplateSet a = TemplateSet::builtin();
  const std::string h0 = a.hash();
  EXPECT_EQ(h0, TemplateSet::builtin().hash());
  a.set("alignment_score", a.get("alignment_score") + " ");
  EXPECT_NE(a.hash(), h0);
}

TEST(Templates, DirectoryOverrides) {
  testing::TempDir dir;
  write_file_atomic(dir / "video_describe.tmpl", "custom {x}");
  const auto t = TemplateSet::with_overrides(dir.path());
  EXPECT_EQ(t.render("video_describe", {{"x", "y"}}), "custom y");
  EXPECT_EQ(t.get("alignment_score"), TemplateSet::builtin().get("alignment_score"));
  EXPECT_THROW(TemplateSet::with_overrides(dir / "missing"), ConfigError);
}

TEST(Templates, EmbeddedGroupsResource) {
  EXPECT_NO_THROW(nlohmann::json::parse(embedded_resource("emotion_groups.json")));
  EXPECT_THROW(embedded_resource("nope.json"), ConfigError);
}

}  // namespace
}  // namespace omni
