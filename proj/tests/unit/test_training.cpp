// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "omni_emotion/backends.hpp"
#include "omni_emotion/error.hpp"
#include "omni_emotion/log.hpp"
#include "omni_emotion/training.hpp"
#include "test_support.hpp"

namespace omni {
namespace {

std::unique_ptr<FaceDetectorBackend> detector() {
  BackendDescriptor d;
  d.backend_id = "mock-detector";
  d.capability = Capability::FACE_DETECT;
  return make_mock_face_detector(d, std::make_shared<ScriptTable>());
}

ReasoningAnnotation annotation_for(const MediaClip& clip, ReviewStatus status) {
  ReasoningAnnotation r;
  r.clip_id = clip.clip_id;
  r.source_dataset = clip.source_dataset;
  r.evidence = {{EvidenceKind::VISUAL_GLOBAL, "A person looks around.", "mock-video", std::nullopt}};
  r.reason = "The face and the voice suggest " + clip.ground_truth_label.value_or("calm") + ".";
  r.open_vocab_labels = {clip.ground_truth_label.value_or("calm"), "tense"};
  r.intensity = 3;
  r.alignment_score = 8;
  r.review_status = status;
  return r;
}

struct Phase3Data {
  DatasetManifest sre, hre;
  std::map<std::string, MediaClip> clips;
};

Phase3Data phase3_data() {
  Phase3Data d;
  for (const auto& c : read_clips(testing::fixture("curate12/clips.jsonl"))) d.clips[c.clip_id] = c;
  d.sre.name = "SRE";
  d.hre.name = "HRE";
  for (const char* id : {"dfew_001", "mafw_001", "caer_001"}) {
    d.sre.records.push_back(annotation_for(d.clips.at(id), ReviewStatus::SELF_REVIEWED));
  }
  d.hre.records.push_back(annotation_for(d.clips.at("dfew_003"), ReviewStatus::HUMAN_APPROVED));
  d.hre.records.push_back(annotation_for(d.clips.at("mafw_002"), ReviewStatus::HUMAN_REJECTED));
  d.sre.recount();
  d.hre.recount();
  return d;
}

std::vector<InstructionExample> examples_for(Phase p) {
  switch (p) {
    case Phase::AUDIO_ALIGN:
      return build_phase1_examples(read_audio_records(testing::fixture("train/audio_records.jsonl")), 3);
    case Phase::FACIAL_ALIGN:
      return build_phase2_examples(read_classification_records(testing::fixture("train/classification.jsonl")), 3);
    case Phase::MULTIMODAL_SFT: {
      const auto d = phase3_data();
      return build_phase3_examples(d.sre, d.hre, d.clips, 3);
    }
  }
  return {};
}

std::vector<ModelInput> inputs_for(const Model& model, Phase p, int frames = 2) {
  static auto det = detector();
  FeatureExtractor fx(model, p == Phase::AUDIO_ALIGN ? nullptr : det.get(), frames);
  std::vector<ModelInput> out;
  for (const auto& ex : examples_for(p)) out.push_back(fx.build(ex));
  return out;
}

TEST(PhaseConfig, Defaults) {
  const auto p1 = PhaseConfig::defaults(Phase::AUDIO_ALIGN);
  EXPECT_EQ(p1.epochs, 1);
  EXPECT_DOUBLE_EQ(p1.learning_rate, 1e-3);
  EXPECT_EQ(p1.batch_size, 256);
  EXPECT_EQ(p1.trainable_blocks, (std::set<std::string>{"audio_projector"}));
  EXPECT_EQ(PhaseConfig::defaults(Phase::FACIAL_ALIGN).trainable_blocks, (std::set<std::string>{"facial_projector"}));
  const auto p3 = PhaseConfig::defaults(Phase::MULTIMODAL_SFT);
  EXPECT_EQ(p3.epochs, 3);
  EXPECT_DOUBLE_EQ(p3.learning_rate, 1e-5);
  EXPECT_EQ(p3.batch_size, 128);
  EXPECT_EQ(p3.frames_per_video, 8);
  EXPECT_EQ(p3.trainable_blocks,
            (std::set<std::string>{"audio_projector", "facial_projector", "visual_projector", "decoder"}));
  EXPECT_THROW(phase_from_number(4), UsageError);
  EXPECT_THROW(phase_from_number(0), UsageError);
  EXPECT_EQ(phase_number(phase_from_number(2)), 2);
}

TEST(PhaseConfig, JsonOverridesAndValidation) {
  const auto c = phase_config_from_json(json{{"epochs", 2}, {"optimizer", "adam"}, {"trainable_blocks", {"decoder"}}},
                                        PhaseConfig::defaults(Phase::MULTIMODAL_SFT));
  EXPECT_EQ(c.epochs, 2);
  EXPECT_EQ(c.optimizer, OptimizerKind::ADAM);
  EXPECT_EQ(c.trainable_blocks, (std::set<std::string>{"decoder"}));
  auto bad = c;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.trainable_blocks.clear();
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Builders, PhaseOneCaptionAndAsr) {
  const auto ex = examples_for(Phase::AUDIO_ALIGN);
  ASSERT_EQ(ex.size(), 20u);
  int captions = 0, asr = 0;
  for (const auto& e : ex) {
    EXPECT_TRUE(e.audio);
    EXPECT_FALSE(e.visual);
    if (e.kind == ExampleKind::CAPTION) {
      ++captions;
      EXPECT_NE(std::find(caption_prompts().begin(), caption_prompts().end(), e.prompt), caption_prompts().end());
    } else {
      ++asr;
      EXPECT_EQ(e.kind, ExampleKind::ASR);
      EXPECT_NE(std::find(asr_prompts().begin(), asr_prompts().end(), e.prompt), asr_prompts().end());
    }
  }
  EXPECT_EQ(captions, 10);
  EXPECT_EQ(asr, 10);
  EXPECT_EQ(caption_prompts().size(), 4u);
  EXPECT_EQ(asr_prompts().size(), 5u);
}

TEST(Builders, PhaseTwoOptionsCoverTheLabelSpace) {
  const auto ex = examples_for(Phase::FACIAL_ALIGN);
  ASSERT_EQ(ex.size(), 8u);
  for (const auto& e : ex) {
    EXPECT_EQ(e.kind, ExampleKind::CLASSIFICATION);
    EXPECT_TRUE(e.visual);
    const auto& space = label_space_for(e.media.source_dataset);
    for (const auto& label : space) EXPECT_NE(e.prompt.find(label), std::string::npos) << label;
    EXPECT_NE(std::find(space.begin(), space.end(), e.answer), space.end());
  }
  EXPECT_EQ(label_space_for(SourceDataset::DFEW).size(), 7u);
  EXPECT_EQ(label_space_for(SourceDataset::MAFW).size(), 11u);
  EXPECT_THROW(label_space_for(SourceDataset::CAER), ValidationError);
}

TEST(Builders, PhaseTwoRejectsLabelOutsideOptions) {
  ClassificationRecord r;
  r.clip = MediaClip{"x", SourceDataset::DFEW, "synthetic://x", 1.0, 25.0, std::string("bored"), std::nullopt};
  EXPECT_THROW(build_phase2_examples({r}, 1), ValidationError);
}

TEST(Builders, PhaseThreeSkipsRejectedAndPairsTasks) {
  const auto ex = examples_for(Phase::MULTIMODAL_SFT);
  ASSERT_EQ(ex.size(), 8u);
  for (const auto& e : ex) {
    EXPECT_NE(e.source_id, "mafw_002");
    EXPECT_TRUE(e.visual && e.audio);
    if (e.kind == ExampleKind::OPEN_VOCAB) {
      EXPECT_EQ(e.prompt, open_vocab_prompt());
    } else {
      EXPECT_EQ(e.kind, ExampleKind::REASONING);
    }
  }
  EXPECT_EQ(open_vocab_answer({"tense", "happy"}), "happy, tense");
  auto d = phase3_data();
  d.clips.erase("dfew_001");
  EXPECT_THROW(build_phase3_examples(d.sre, d.hre, d.clips, 1), PreconditionError);
}

TEST(Builders, DeterministicForSeed) {
  const auto records = read_audio_records(testing::fixture("train/audio_records.jsonl"));
  const auto a = build_phase1_examples(records, 5);
  const auto b = build_phase1_examples(records, 5);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].prompt, b[i].prompt);
}

TEST(Records, MalformedLinesCarryLineNumbers) {
  testing::TempDir dir;
  write_file_atomic(dir / "a.jsonl", "{\"audio_id\":\"a\",\"media_uri\":\"synthetic://a\",\"caption\":\"x\"}\n{bad\n");
  try {
    read_audio_records(dir / "a.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Features, ShapesFollowTheConfig) {
  const Model m = Model::init(ModelConfig::toy());
  const auto in = inputs_for(m, Phase::MULTIMODAL_SFT, 4);
  ASSERT_FALSE(in.empty());
  EXPECT_EQ(in[0].visual_features.size(), 4u);
  EXPECT_EQ(in[0].face_scales.size(), 4u);
  ASSERT_TRUE(in[0].audio_features);
  EXPECT_EQ(in[0].audio_features->cols(), m.config().audio_channels);
  EXPECT_THROW(FeatureExtractor(m, nullptr, m.config().max_frames + 1), ConfigError);
}

class Freezing : public ::testing::TestWithParam<Phase> {};

TEST_P(Freezing, OnlyTrainableBlocksChange) {
  const Phase phase = GetParam();
  Model model = Model::init(ModelConfig::toy());
  const auto inputs = inputs_for(model, phase);
  const ParamMap before = model.params();
  PhaseConfig cfg = PhaseConfig::defaults(phase);
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-2;
  run_phase(cfg, model, inputs);
  for (const auto& [name, value] : before) {
    const bool trainable = cfg.trainable_blocks.count(block_of(name)) > 0;
    if (trainable) {
      EXPECT_NE(model.param(name), value) << name << " should have moved";
    } else {
      EXPECT_EQ(model.param(name), value) << name << " should be frozen";
    }
  }
}

TEST_P(Freezing, LossFallsMonotonicallyOverTwentySteps) {
  const Phase phase = GetParam();
  Model model = Model::init(ModelConfig::toy());
  const auto inputs = inputs_for(model, phase);
  PhaseConfig cfg = PhaseConfig::defaults(phase);
  cfg.epochs = 20;
  cfg.batch_size = static_cast<int>(inputs.size());
  cfg.learning_rate = 0.05;
  const auto r = run_phase(cfg, model, inputs);
  ASSERT_EQ(r.steps, 20);
  for (std::size_t i = 1; i < r.losses.size(); ++i) EXPECT_LE(r.losses[i], r.losses[i - 1]) << "step " << i + 1;
  EXPECT_LT(r.final_loss, r.losses.front());
}

INSTANTIATE_TEST_SUITE_P(AllPhases, Freezing,
                         ::testing::Values(Phase::AUDIO_ALIGN, Phase::FACIAL_ALIGN, Phase::MULTIMODAL_SFT));

TEST(RunPhase, BadBlocksFailBeforeAnyStep) {
  testing::TempDir dir;
  Model model = Model::init(ModelConfig::toy());
  const auto inputs = inputs_for(model, Phase::AUDIO_ALIGN);
  const ParamMap before = model.params();
  for (const char* block : {"audio_encoder", "no_such_block"}) {
    PhaseConfig cfg = PhaseConfig::defaults(Phase::AUDIO_ALIGN);
    cfg.trainable_blocks = {"audio_projector", block};
    RunPhaseOptions opts;
    opts.log_path = dir / "log.jsonl";
    EXPECT_THROW(run_phase(cfg, model, inputs, opts), ConfigError) << block;
    EXPECT_FALSE(std::filesystem::exists(dir / "log.jsonl"));
  }
  EXPECT_EQ(model.params(), before);
}

TEST(RunPhase, StepCountsLogAndCheckpoint) {
  testing::TempDir dir;
  Model model = Model::init(ModelConfig::toy());
  const auto inputs = inputs_for(model, Phase::AUDIO_ALIGN);  // 20 examples
  PhaseConfig cfg = PhaseConfig::defaults(Phase::AUDIO_ALIGN);
  cfg.batch_size = 6;
  cfg.epochs = 2;
  RunPhaseOptions opts;
  opts.log_path = dir / "phase1.log.jsonl";
  opts.checkpoint_dir = dir / "ckpt";
  const auto r = run_phase(cfg, model, inputs, opts);
  EXPECT_EQ(r.steps, 8);  // ceil(20 / 6) per epoch
  ASSERT_TRUE(r.checkpoint);
  EXPECT_EQ(r.checkpoint->filename(), "phase1-step8.json");
  EXPECT_EQ(Model::load(*r.checkpoint).params(), model.params());

  std::ifstream log(*opts.log_path);
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    ++lines;
    EXPECT_EQ(line.rfind("{\"step\":" + std::to_string(lines) + ",\"phase\":1,\"loss\":", 0), 0u) << line;
    const auto j = json::parse(line);
    EXPECT_DOUBLE_EQ(j.at("lr").get<double>(), 1e-3);
    EXPECT_DOUBLE_EQ(j.at("loss").get<double>(), r.losses[lines - 1]);
  }
  EXPECT_EQ(lines, 8);
}

TEST(RunPhase, BatchGradientIsTheMeanOverExamples) {
  Model a = Model::init(ModelConfig::toy());
  Model b = a;
  const auto inputs = inputs_for(a, Phase::AUDIO_ALIGN);
  const std::vector<ModelInput> four(inputs.begin(), inputs.begin() + 4);
  PhaseConfig cfg = PhaseConfig::defaults(Phase::AUDIO_ALIGN);
  cfg.batch_size = 4;
  cfg.shuffle = false;
  cfg.learning_rate = 0.1;
  run_phase(cfg, a, four);

  ParamMap g = zero_grads(b);
  for (const auto& in : four) example_loss(b, in, &g);
  for (const auto& [name, value] : b.params()) {
    if (block_of(name) != "audio_projector") continue;
    const Matrix expected = value - 0.1 * g.at(name) / 4.0;
    EXPECT_TRUE(a.param(name).isApprox(expected, 1e-12)) << name;
  }
}

TEST(RunPhase, AdamAlsoReducesLoss) {
  Model model = Model::init(ModelConfig::toy());
  const auto inputs = inputs_for(model, Phase::AUDIO_ALIGN);
  PhaseConfig cfg = PhaseConfig::defaults(Phase::AUDIO_ALIGN);
  cfg.optimizer = OptimizerKind::ADAM;
  cfg.epochs = 10;
  cfg.batch_size = 20;
  cfg.learning_rate = 1e-2;
  const auto r = run_phase(cfg, model, inputs);
  EXPECT_LT(r.final_loss, r.losses.front());
}

}  // namespace
}  // namespace omni
