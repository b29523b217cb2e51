// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "omni_emotion/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "omni_emotion/error.hpp"
#include "omni_emotion/log.hpp"
#include "omni_emotion/util.hpp"

namespace omni {

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::AUDIO_ALIGN: return "AUDIO_ALIGN";
    case Phase::FACIAL_ALIGN: return "FACIAL_ALIGN";
    case Phase::MULTIMODAL_SFT: return "MULTIMODAL_SFT";
  }
  return "?";
}

Phase phase_from_number(int n) {
  if (n < 1 || n > 3) throw UsageError("phase must be 1, 2 or 3, got " + std::to_string(n));
  return static_cast<Phase>(n);
}

int phase_number(Phase p) { return static_cast<int>(p); }

OptimizerKind parse_optimizer(std::string_view name) {
  const std::string n = to_lower(name);
  if (n == "sgd") return OptimizerKind::SGD;
  if (n == "adam") return OptimizerKind::ADAM;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

PhaseConfig PhaseConfig::defaults(Phase phase) {
  PhaseConfig c;
  c.phase = phase;
  switch (phase) {
    case Phase::AUDIO_ALIGN:
      c.trainable_blocks = {"audio_projector"};
      break;
    case Phase::FACIAL_ALIGN:
      c.trainable_blocks = {"facial_projector"};
      break;
    case Phase::MULTIMODAL_SFT:
      c.epochs = 3;
      c.learning_rate = 1e-5;
      c.batch_size = 128;
      c.trainable_blocks = {"audio_projector", "facial_projector", "visual_projector", "decoder"};
      break;
  }
  return c;
}

void PhaseConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (frames_per_video < 1) throw ConfigError("frames_per_video must be at least 1");
  if (trainable_blocks.empty()) throw ConfigError("trainable_blocks must not be empty");
  if (optimizer == OptimizerKind::ADAM) {
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_epsilon > 0.0))
      throw ConfigError("adam hyper-parameters out of range");
  }
}

PhaseConfig phase_config_from_json(const json& j, PhaseConfig base) {
  if (!j.is_object()) throw ConfigError("phase section must be an object");
  try {
    if (j.contains("epochs")) base.epochs = j.at("epochs").get<int>();
    if (j.contains("learning_rate")) base.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_size")) base.batch_size = j.at("batch_size").get<int>();
    if (j.contains("frames_per_video")) base.frames_per_video = j.at("frames_per_video").get<int>();
    if (j.contains("trainable_blocks")) {
      base.trainable_blocks.clear();
      for (const auto& b : j.at("trainable_blocks")) base.trainable_blocks.insert(b.get<std::string>());
    }
    if (j.contains("optimizer")) base.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    if (j.contains("adam_beta1")) base.adam_beta1 = j.at("adam_beta1").get<double>();
    if (j.contains("adam_beta2")) base.adam_beta2 = j.at("adam_beta2").get<double>();
    if (j.contains("adam_epsilon")) base.adam_epsilon = j.at("adam_epsilon").get<double>();
    if (j.contains("shuffle")) base.shuffle = j.at("shuffle").get<bool>();
    if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad phase setting: ") + e.what());
  }
  base.validate();
  return base;
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

namespace {

template <class F>
void for_each_jsonl(const std::filesystem::path& path, F&& fn) {
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    } catch (const FormatError& e) {
      throw ParseError(line_no, e.what());
    }
  }
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

}  // namespace

std::vector<AudioRecord> read_audio_records(const std::filesystem::path& path) {
  std::vector<AudioRecord> out;
  for_each_jsonl(path, [&](const json& j) {
    AudioRecord r;
    r.audio_id = j.at("audio_id").get<std::string>();
    r.media_uri = j.at("media_uri").get<std::string>();
    r.duration_s = j.value("duration_s", 1.0);
    r.caption = optional_string(j, "caption");
    r.transcript = optional_string(j, "transcript");
    if (r.audio_id.empty()) throw ValidationError("audio_id", "must be non-empty");
    if (!(r.duration_s > 0.0)) throw ValidationError("duration_s", "must be strictly positive");
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<ClassificationRecord> read_classification_records(const std::filesystem::path& path) {
  std::vector<ClassificationRecord> out;
  for_each_jsonl(path, [&](const json& j) {
    ClassificationRecord r;
    r.clip = clip_from_json(j);
    r.clip.validate();
    if (j.contains("label_space")) r.label_space = j.at("label_space").get<std::vector<std::string>>();
    out.push_back(std::move(r));
  });
  return out;
}

const std::vector<std::string>& label_space_for(SourceDataset source) {
  static const std::vector<std::string> dfew = {"happy", "sad", "neutral", "angry", "surprise", "disgust", "fear"};
  static const std::vector<std::string> mafw = {"angry",   "disgust",     "fear",    "happy",
                                                "neutral", "sad",         "surprise", "contemptuous",
                                                "anxious", "helpless",    "disappointed"};
  switch (source) {
    case SourceDataset::DFEW: return dfew;
    case SourceDataset::MAFW: return mafw;
    default: break;
  }
  throw ValidationError("label_space", "no default label space for " + std::string(to_string(source)));
}

// ---------------------------------------------------------------------------
// Examples
// ---------------------------------------------------------------------------

std::string_view to_string(ExampleKind k) {
  switch (k) {
    case ExampleKind::CAPTION: return "CAPTION";
    case ExampleKind::ASR: return "ASR";
    case ExampleKind::CLASSIFICATION: return "CLASSIFICATION";
    case ExampleKind::REASONING: return "REASONING";
    case ExampleKind::OPEN_VOCAB: return "OPEN_VOCAB";
  }
  return "?";
}

void InstructionExample::validate() const {
  if (trim(prompt).empty()) throw ValidationError("prompt", "must be non-empty");
  if (trim(answer).empty()) throw ValidationError("answer", "must be non-empty");
  if (!visual && !audio) throw ValidationError("modalities", "at least one modality is required");
  if (source_id.empty()) throw ValidationError("source_id", "must be non-empty");
}

const std::vector<std::string>& caption_prompts() {
  static const std::vector<std::string> p = {
      "Listen to this audio clip and provide its caption in English.",
      "Could you summarise what's happening in this audio?",
      "Please describe the audio in English.",
      "Describe the following audio in a caption.",
  };
  return p;
}

const std::vector<std::string>& asr_prompts() {
  static const std::vector<std::string> p = {
      "Write down the content of the speech you heard.",
      "Give me the transcription of the speech you heard.",
      "Please transcribe the speech into a written format.",
      "Recognize the speech and write it down in a written format.",
      "Recognize the speech and give me the transcription.",
  };
  return p;
}

const std::vector<std::string>& classification_prompts() {
  static const std::vector<std::string> p = {
      "As an emotional recognition expert, when you observe the video, what is the primary emotion exhibited by "
      "the characters?",
      "Which emotion exhibited by the characters can you confirm as the primary emotion?",
      "What primary emotion conveyed by the characters can you clearly identify?",
      "Which emotion can you recognize being expressed by the characters?",
  };
  return p;
}

const std::vector<std::string>& reasoning_prompts() {
  static const std::vector<std::string> p = {
      "What insights can we gain about the character's emotional state from their actions and facial "
      "expressions, as well as the accompanying audio and visual cues in the video? Please provide a detailed "
      "analysis.",
      "Based on the character's physical actions and emotional expressions, along with the video's sound and "
      "visual context, what can we deduce about their emotional state? Please elaborate thoroughly.",
      "What can we interpret about the character's emotional state through their expressive actions and visual "
      "cues, as well as the audio elements present in the video? Please provide an in-depth analysis.",
  };
  return p;
}

const std::string& open_vocab_prompt() {
  static const std::string p =
      "Which emotion labels describe the character in this video? Answer with a comma-separated list of labels.";
  return p;
}

std::string open_vocab_answer(const LabelSet& labels) {
  return join(std::vector<std::string>(labels.begin(), labels.end()), ", ");
}

namespace {

/// Round-robin over a pool from a seeded starting offset.
class PromptCycle {
 public:
  PromptCycle(const std::vector<std::string>& pool, std::uint64_t seed, std::string_view name) : pool_(pool) {
    std::mt19937_64 rng(derive_seed(seed, name));
    next_ = static_cast<std::size_t>(uniform_below(rng, pool.size()));
  }
  const std::string& next() {
    const std::string& p = pool_[next_];
    next_ = (next_ + 1) % pool_.size();
    return p;
  }

 private:
  const std::vector<std::string>& pool_;
  std::size_t next_ = 0;
};

}  // namespace

std::vector<InstructionExample> build_phase1_examples(const std::vector<AudioRecord>& records, std::uint64_t seed) {
  PromptCycle captions(caption_prompts(), seed, "pool/caption");
  PromptCycle asr(asr_prompts(), seed, "pool/asr");
  std::vector<InstructionExample> out;
  for (const auto& r : records) {
    const bool has_caption = r.caption && !trim(*r.caption).empty();
    const bool has_transcript = r.transcript && !trim(*r.transcript).empty();
    if (!has_caption && !has_transcript) {
      log_warning("audio record '" + r.audio_id + "' has neither caption nor transcript; skipped");
      continue;
    }
    const MediaClip media{r.audio_id, SourceDataset::OTHER, r.media_uri, r.duration_s, 25.0, std::nullopt,
                          std::nullopt};
    if (has_caption) {
      out.push_back({captions.next(), *r.caption, false, true, r.audio_id, ExampleKind::CAPTION, media});
    }
    if (has_transcript) {
      out.push_back({asr.next(), *r.transcript, false, true, r.audio_id, ExampleKind::ASR, media});
    }
  }
  return out;
}

std::vector<InstructionExample> build_phase2_examples(const std::vector<ClassificationRecord>& records,
                                                      std::uint64_t seed) {
  PromptCycle prompts(classification_prompts(), seed, "pool/classification");
  std::vector<InstructionExample> out;
  for (const auto& r : records) {
    if (!r.clip.ground_truth_label || r.clip.ground_truth_label->empty()) {
      throw ValidationError("ground_truth_label", "clip '" + r.clip.clip_id + "' has no label");
    }
    const std::string& label = *r.clip.ground_truth_label;
    std::vector<std::string> options = r.label_space.empty() ? label_space_for(r.clip.source_dataset) : r.label_space;
    if (std::find(options.begin(), options.end(), label) == options.end()) {
      throw ValidationError("ground_truth_label",
                            "label '" + label + "' of clip '" + r.clip.clip_id + "' is not in the option list");
    }
    std::mt19937_64 rng(derive_seed(seed, "options/" + r.clip.clip_id));
    seeded_shuffle(options, rng);
    out.push_back({prompts.next() + " " + join(options, ", "), label, true, false, r.clip.clip_id,
                   ExampleKind::CLASSIFICATION, r.clip});
  }
  return out;
}

std::vector<InstructionExample> build_phase3_examples(const DatasetManifest& sre, const DatasetManifest& hre,
                                                      const std::map<std::string, MediaClip>& clips,
                                                      std::uint64_t seed) {
  PromptCycle prompts(reasoning_prompts(), seed, "pool/reasoning");
  std::vector<InstructionExample> out;
  for (const DatasetManifest* m : {&sre, &hre}) {
    for (const auto& rec : m->records) {
      if (rec.review_status == ReviewStatus::HUMAN_REJECTED) continue;
      const auto it = clips.find(rec.clip_id);
      if (it == clips.end()) {
        throw PreconditionError("no media entry for clip '" + rec.clip_id + "' of manifest " + m->name);
      }
      out.push_back({prompts.next(), rec.reason, true, true, rec.clip_id, ExampleKind::REASONING, it->second});
      out.push_back({open_vocab_prompt(), open_vocab_answer(rec.open_vocab_labels), true, true, rec.clip_id,
                     ExampleKind::OPEN_VOCAB, it->second});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

FeatureExtractor::FeatureExtractor(const Model& model, FaceDetector* detector, int frames_per_video)
    : model_(model), detector_(detector), frames_per_video_(frames_per_video), tokenizer_(model.config().vocab) {
  if (frames_per_video < 1) throw ConfigError("frames_per_video must be at least 1");
  if (frames_per_video > model.config().max_frames) {
    throw ConfigError("frames_per_video exceeds the model's max_frames");
  }
}

ModelInput FeatureExtractor::build(const InstructionExample& example) const {
  example.validate();
  ModelInput input;
  input.ids = build_chat_ids(tokenizer_, example.prompt, example.answer);
  auto source = open_media(example.media);
  if (example.audio) {
    auto wave = source->audio();
    if (!wave) throw DecodeError(example.media.clip_id, "example needs audio but the clip has none");
    MelConfig mc;
    mc.n_mels = model_.config().n_mels;
    const auto mel = compute_log_mel(resample_audio(*wave), mc);
    if (audio_token_count(mel.frames()) > 0) input.audio_features = audio_encoder_features(model_, mel);
  }
  if (example.visual) {
    const auto frames = sample_uniform_frames(example.media, *source, frames_per_video_);
    for (const auto& f : frames) input.visual_features.push_back(visual_encoder_features(model_, f.image));
    if (detector_ != nullptr) {
      for (const auto& f : frames) {
        const auto dets = detector_->detect(f);
        if (dets.empty()) {
          input.face_scales.emplace_back(std::nullopt);
          continue;
        }
        const auto best = std::max_element(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
          return a.confidence < b.confidence;
        });
        const Box box = expand_and_clamp(best->box, kDefaultCropMargin);
        input.face_scales.emplace_back(face_encoder_scales(model_, crop_image(f.image, box)));
      }
    }
  }
  return input;
}

// ---------------------------------------------------------------------------
// Phase runner
// ---------------------------------------------------------------------------

namespace {

void check_blocks(const PhaseConfig& config, const Model& model) {
  const auto blocks = model.blocks();
  for (const auto& b : config.trainable_blocks) {
    if (!blocks.count(b)) throw ConfigError("trainable block '" + b + "' not found in the model");
    if (!trainable_capable_blocks().count(b)) throw ConfigError("block '" + b + "' is a frozen encoder stub");
  }
}

nlohmann::ordered_json log_line(int step, Phase phase, double loss, double lr) {
  return nlohmann::ordered_json{{"step", step}, {"phase", phase_number(phase)}, {"loss", loss}, {"lr", lr}};
}

}  // namespace

PhaseResult run_phase(const PhaseConfig& config, Model& model, const std::vector<ModelInput>& inputs,
                      const RunPhaseOptions& options) {
  config.validate();
  check_blocks(config, model);
  if (inputs.empty()) throw PreconditionError("run_phase needs at least one example");

  std::ofstream log_out;
  if (options.log_path) {
    if (options.log_path->has_parent_path()) std::filesystem::create_directories(options.log_path->parent_path());
    log_out.open(*options.log_path, std::ios::trunc);
    if (!log_out) throw IoError("cannot open training log " + options.log_path->string());
  }

  std::vector<std::string> trained;
  for (const auto& [name, _] : model.params()) {
    if (config.trainable_blocks.count(block_of(name))) trained.push_back(name);
  }
  ParamMap adam_m, adam_v;
  if (config.optimizer == OptimizerKind::ADAM) {
    for (const auto& name : trained) {
      const auto& p = model.param(name);
      adam_m[name] = Matrix::Zero(p.rows(), p.cols());
      adam_v[name] = Matrix::Zero(p.rows(), p.cols());
    }
  }

  const std::size_t n = inputs.size();
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(n);
  PhaseResult result;
  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (config.shuffle) {
      std::mt19937_64 rng(derive_seed(config.seed, "epoch/" + std::to_string(epoch)));
      seeded_shuffle(order, rng);
    }
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      ParamMap grads = zero_grads(model);
      double loss_sum = 0.0;
      for (std::size_t k = start; k < end; ++k) loss_sum += example_loss(model, inputs[order[k]], &grads).loss;
      const double count = static_cast<double>(end - start);
      ++step;
      const double loss = loss_sum / count;
      for (const auto& name : trained) {
        Matrix& p = model.param(name);
        const Matrix g = grads.at(name) / count;
        if (config.optimizer == OptimizerKind::SGD) {
          p -= config.learning_rate * g;
        } else {
          Matrix& m = adam_m.at(name);
          Matrix& v = adam_v.at(name);
          m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * g;
          v = config.adam_beta2 * v + (1.0 - config.adam_beta2) * g.cwiseProduct(g);
          const double c1 = 1.0 - std::pow(config.adam_beta1, step);
          const double c2 = 1.0 - std::pow(config.adam_beta2, step);
          p.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + config.adam_epsilon);
        }
      }
      result.losses.push_back(loss);
      if (log_out) log_out << log_line(step, config.phase, loss, config.learning_rate).dump() << '\n';
    }
  }
  result.steps = step;

  double total = 0.0;
  for (const auto& in : inputs) total += example_loss(model, in).loss;
  result.final_loss = total / static_cast<double>(n);

  if (options.checkpoint_dir) {
    std::filesystem::create_directories(*options.checkpoint_dir);
    const auto path = *options.checkpoint_dir / ("phase" + std::to_string(phase_number(config.phase)) + "-step" +
                                                 std::to_string(step) + ".json");
    model.save(path);
    result.checkpoint = path;
  }
  return result;
}

PhaseResult run_phase(const PhaseConfig& config, Model& model, const std::vector<InstructionExample>& examples,
                      FaceDetector* detector, const RunPhaseOptions& options) {
  config.validate();
  check_blocks(config, model);
  const FeatureExtractor extractor(model, detector, config.frames_per_video);
  std::vector<ModelInput> inputs;
  inputs.reserve(examples.size());
  for (const auto& ex : examples) inputs.push_back(extractor.build(ex));
  return run_phase(config, model, inputs, options);
}

}  // namespace omni
