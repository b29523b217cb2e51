// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "omni_emotion/corpus.hpp"
#include "omni_emotion/media.hpp"
#include "omni_emotion/model.hpp"

namespace omni {

enum class Phase { AUDIO_ALIGN = 1, FACIAL_ALIGN = 2, MULTIMODAL_SFT = 3 };
std::string_view to_string(Phase p);
Phase phase_from_number(int n);
int phase_number(Phase p);

enum class OptimizerKind { SGD, ADAM };
OptimizerKind parse_optimizer(std::string_view name);

struct PhaseConfig {
  Phase phase = Phase::AUDIO_ALIGN;
  int epochs = 1;
  double learning_rate = 1e-3;
  int batch_size = 256;
  int frames_per_video = 8;
  std::set<std::string> trainable_blocks;
  OptimizerKind optimizer = OptimizerKind::SGD;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool shuffle = true;

  static PhaseConfig defaults(Phase phase);
  void validate() const;
};

/// Applies per-phase overrides from a JSON object (epochs, learning_rate,
/// batch_size, frames_per_video, trainable_blocks, optimizer, shuffle).
PhaseConfig phase_config_from_json(const json& j, PhaseConfig base);

// ---------------------------------------------------------------------------
// Source records
// ---------------------------------------------------------------------------

struct AudioRecord {
  std::string audio_id;
  std::string media_uri;
  double duration_s = 1.0;
  std::optional<std::string> caption;
  std::optional<std::string> transcript;
};

struct ClassificationRecord {
  MediaClip clip;  // ground_truth_label holds the class
  std::vector<std::string> label_space;  // empty: the dataset default
};

std::vector<AudioRecord> read_audio_records(const std::filesystem::path& path);
std::vector<ClassificationRecord> read_classification_records(const std::filesystem::path& path);

/// Class list of a categorical dataset (DFEW: 7 classes, MAFW: 11).
const std::vector<std::string>& label_space_for(SourceDataset source);

// ---------------------------------------------------------------------------
// Instruction examples
// ---------------------------------------------------------------------------

enum class ExampleKind { CAPTION, ASR, CLASSIFICATION, REASONING, OPEN_VOCAB };
std::string_view to_string(ExampleKind k);

struct InstructionExample {
  std::string prompt;
  std::string answer;
  bool visual = false;
  bool audio = false;
  std::string source_id;  // clip_id or audio_id
  ExampleKind kind = ExampleKind::CAPTION;
  MediaClip media;  // where the features come from

  void validate() const;
};

const std::vector<std::string>& caption_prompts();
const std::vector<std::string>& asr_prompts();
const std::vector<std::string>& classification_prompts();
const std::vector<std::string>& reasoning_prompts();
const std::string& open_vocab_prompt();

std::vector<InstructionExample> build_phase1_examples(const std::vector<AudioRecord>& records, std::uint64_t seed);
std::vector<InstructionExample> build_phase2_examples(const std::vector<ClassificationRecord>& records,
                                                      std::uint64_t seed);
/// clips maps clip_id to its media; HUMAN_REJECTED records are skipped.
std::vector<InstructionExample> build_phase3_examples(const DatasetManifest& sre, const DatasetManifest& hre,
                                                      const std::map<std::string, MediaClip>& clips,
                                                      std::uint64_t seed);

/// Comma-joined sorted label set, the open-vocabulary answer format.
std::string open_vocab_answer(const LabelSet& labels);

// ---------------------------------------------------------------------------
// Features and the phase runner
// ---------------------------------------------------------------------------

/// Runs the frozen encoder stubs over an example's media. Facial features
/// need a detector; without one the facial path is left empty.
class FeatureExtractor {
 public:
  FeatureExtractor(const Model& model, FaceDetector* detector, int frames_per_video);
  ModelInput build(const InstructionExample& example) const;

 private:
  const Model& model_;
  FaceDetector* detector_;
  int frames_per_video_;
  ToyTokenizer tokenizer_;
};

struct RunPhaseOptions {
  std::optional<std::filesystem::path> log_path;        // JSONL, one line per step
  std::optional<std::filesystem::path> checkpoint_dir;  // phase{N}-step{K}.json
};

struct PhaseResult {
  int steps = 0;
  std::vector<double> losses;  // mean batch loss before each update
  double final_loss = 0.0;     // loss over all examples after the last update
  std::optional<std::filesystem::path> checkpoint;
};

/// Steps per epoch: ceil(N / batch_size); gradients are averaged over each
/// logical batch. Only parameters in trainable_blocks are updated.
PhaseResult run_phase(const PhaseConfig& config, Model& model, const std::vector<ModelInput>& inputs,
                      const RunPhaseOptions& options = {});

PhaseResult run_phase(const PhaseConfig& config, Model& model, const std::vector<InstructionExample>& examples,
                      FaceDetector* detector, const RunPhaseOptions& options = {});

}  // namespace omni
