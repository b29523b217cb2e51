// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "omni_emotion/backends.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

#include "omni_emotion/error.hpp"
#include "omni_emotion/http_backend.hpp"
#include "omni_emotion/log.hpp"
#include "omni_emotion/util.hpp"

namespace omni {

namespace {

constexpr std::pair<Capability, std::string_view> kCapabilityNames[] = {
    {Capability::VIDEO_DESCRIBE, "VIDEO_DESCRIBE"}, {Capability::FACE_DESCRIBE, "FACE_DESCRIBE"},
    {Capability::AGE_GENDER, "AGE_GENDER"},         {Capability::AUDIO_ANALYZE, "AUDIO_ANALYZE"},
    {Capability::JUDGE, "JUDGE"},                   {Capability::FACE_DETECT, "FACE_DETECT"},
};

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

std::string_view to_string(Capability c) {
  for (const auto& [value, name] : kCapabilityNames) {
    if (value == c) return name;
  }
  return "UNKNOWN";
}

Capability parse_capability(std::string_view name) {
  const std::string upper = [&] {
    std::string s(name);
    for (char& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return s;
  }();
  for (const auto& [value, n] : kCapabilityNames) {
    if (n == upper) return value;
  }
  throw ValidationError("capability", "unknown capability '" + std::string(name) + "'");
}

void BackendDescriptor::validate() const {
  if (backend_id.empty()) throw ValidationError("backend_id", "must be non-empty");
  if (!(timeout_s > 0.0) || !std::isfinite(timeout_s)) throw ValidationError("timeout_s", "must be > 0");
  if (max_retries < 0) throw ValidationError("max_retries", "must be >= 0");
}

BackendDescriptor descriptor_from_json(const json& j) {
  BackendDescriptor d;
  try {
    d.backend_id = j.at("backend_id").get<std::string>();
    d.capability = parse_capability(j.at("capability").get<std::string>());
    if (j.contains("endpoint") && !j["endpoint"].is_null()) d.endpoint = j["endpoint"].get<std::string>();
    if (j.contains("api_key") && !j["api_key"].is_null()) d.api_key = j["api_key"].get<std::string>();
    d.timeout_s = j.value("timeout_s", d.timeout_s);
    d.max_retries = j.value("max_retries", d.max_retries);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad backend descriptor: ") + e.what());
  }
  d.validate();
  return d;
}

ScoreParse parse_judge_score(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) continue;
    if (i > 0 && is_word_char(text[i - 1])) {
      // digits glued to a word (ids such as clip_007); skip the whole run
      while (i + 1 < text.size() && is_word_char(text[i + 1])) ++i;
      continue;
    }
    std::size_t end = i;
    while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
    const bool negative = i > 0 && text[i - 1] == '-';
    const bool fractional = end + 1 < text.size() && (text[end] == '.' || text[end] == ',') &&
                            std::isdigit(static_cast<unsigned char>(text[end + 1]));
    const std::string token(text.substr(i, end - i));
    if (negative) return {std::nullopt, "first integer is negative: -" + token};
    if (fractional) return {std::nullopt, "first number is not an integer"};
    if (token.size() > 2) return {std::nullopt, "first integer out of range: " + token};
    const int value = std::stoi(token);
    if (value > 10) return {std::nullopt, "first integer out of range: " + token};
    return {value, {}};
  }
  return {std::nullopt, "no integer in response"};
}

Backend::Backend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {
  descriptor_.validate();
}

std::string VideoDescriber::describe_video(std::span<const Frame> frames, const std::string& prompt) {
  if (frames.empty()) throw PreconditionError("describe_video needs at least one frame");
  std::string text = trim(do_describe_video(frames, prompt));
  if (text.empty()) throw ProtocolError(id(), "empty video description");
  return text;
}

std::string FaceDescriber::describe_face(std::span<const FaceCrop> crops, const std::string& prompt) {
  if (crops.empty()) throw PreconditionError("describe_face needs at least one crop");
  for (const auto& c : crops) {
    if (c.image.empty()) throw PreconditionError("describe_face got an empty crop");
  }
  std::string text = trim(do_describe_face(crops, prompt));
  if (text.empty()) throw ProtocolError(id(), "empty face description");
  return text;
}

AgeGenderEstimate AgeGenderEstimator::estimate_age_gender(const Image& face_crop) {
  if (face_crop.empty()) throw PreconditionError("estimate_age_gender got an empty crop");
  AgeGenderEstimate e = do_estimate(face_crop);
  if (!std::isfinite(e.age_years) || e.age_years < 0.0) {
    throw ProtocolError(id(), "age must be finite and >= 0");
  }
  if (!std::isfinite(e.confidence) || e.confidence < 0.0 || e.confidence > 1.0) {
    throw ProtocolError(id(), "confidence outside [0,1]");
  }
  return e;
}

AudioAnalysis AudioAnalyzer::analyze_audio(const Waveform& wave) {
  if (wave.sample_rate != kTargetSampleRate) {
    throw PreconditionError("analyze_audio expects 16000 Hz input, got " + std::to_string(wave.sample_rate));
  }
  AudioAnalysis a = do_analyze(wave);
  a.caption = trim(a.caption);
  a.transcript = trim(a.transcript);
  a.audio_emotion = trim(a.audio_emotion);
  if (a.caption.empty()) throw ProtocolError(id(), "empty audio caption");
  if (a.audio_emotion.empty()) throw ProtocolError(id(), "empty audio emotion");
  return a;
}

JudgeResult Judge::judge(const std::string& prompt, const std::vector<std::string>& context_documents,
                         bool score_required) {
  if (trim(prompt).empty()) throw PreconditionError("judge prompt must be non-empty");
  const int attempts = descriptor().max_retries + 1;
  std::string last_error;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    RawJudgeResponse r = do_judge(prompt, context_documents);
    JudgeResult out{trim(r.text), std::nullopt, r.raw.empty() ? r.text : r.raw};
    if (!score_required) {
      if (out.verdict_text.empty()) throw ProtocolError(id(), "empty judge response");
      return out;
    }
    if (r.score) {
      if (*r.score >= 0 && *r.score <= 10) {
        out.score = static_cast<int>(*r.score);
        return out;
      }
      last_error = "structured score out of range: " + std::to_string(*r.score);
    } else {
      ScoreParse p = parse_judge_score(r.text);
      if (p.score) {
        out.score = p.score;
        return out;
      }
      last_error = p.error;
    }
    log_warning("judge '" + id() + "' attempt " + std::to_string(attempt + 1) + "/" + std::to_string(attempts) +
                ": " + last_error);
  }
  throw ScoringError(id(), "no valid score after " + std::to_string(attempts) + " attempt(s): " + last_error);
}

// ---------------------------------------------------------------------------
// Script table and mocks
// ---------------------------------------------------------------------------

ScriptTable ScriptTable::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("mock script must be a JSON object");
  ScriptTable t;
  auto section = [&](const char* key, json& dst) {
    if (j.contains(key)) {
      if (!j[key].is_object()) throw ConfigError(std::string("mock script section '") + key + "' must be an object");
      dst = j[key];
    }
  };
  section("video", t.video);
  section("face", t.face);
  section("age_gender", t.age_gender);
  section("audio", t.audio);
  section("detector", t.detector);
  section("judge", t.judge);
  return t;
}

ScriptTable ScriptTable::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse mock script " + path.string() + ": " + e.what());
  }
}

std::string checksum_of(std::span<const Frame> frames) {
  std::string acc;
  for (const auto& f : frames) acc += to_hex(f.image.checksum());
  return to_hex(fnv1a64(acc));
}

std::string checksum_of(std::span<const FaceCrop> crops) {
  std::string acc;
  for (const auto& c : crops) acc += to_hex(c.image.checksum());
  return to_hex(fnv1a64(acc));
}

namespace {

/// by_checksum, then by_clip, then default.
const json* lookup(const json& section, const std::string& checksum, const std::string& clip_id) {
  if (auto it = section.find("by_checksum"); it != section.end() && it->contains(checksum)) {
    return &(*it)[checksum];
  }
  if (!clip_id.empty()) {
    if (auto it = section.find("by_clip"); it != section.end() && it->contains(clip_id)) {
      return &(*it)[clip_id];
    }
  }
  if (auto it = section.find("default"); it != section.end()) return &*it;
  return nullptr;
}

std::string as_text(const json* entry, const std::string& fallback) {
  if (entry == nullptr) return fallback;
  if (!entry->is_string()) throw ConfigError("mock script text entries must be strings");
  return entry->get<std::string>();
}

class MockVideoDescriber final : public VideoDescriber {
 public:
  MockVideoDescriber(BackendDescriptor d, std::shared_ptr<const ScriptTable> s)
      : VideoDescriber(std::move(d)), script_(std::move(s)) {}

 protected:
  std::string do_describe_video(std::span<const Frame> frames, const std::string&) override {
    const std::string& clip = frames.front().clip_id;
    return as_text(lookup(script_->video, checksum_of(frames), clip),
                   "A person is shown in a plain indoor scene across " + std::to_string(frames.size()) +
                       " frames.");
  }

 private:
  std::shared_ptr<const ScriptTable> script_;
};

class MockFaceDescriber final : public FaceDescriber {
 public:
  MockFaceDescriber(BackendDescriptor d, std::shared_ptr<const ScriptTable> s)
      : FaceDescriber(std::move(d)), script_(std::move(s)) {}

 protected:
  std::string do_describe_face(std::span<const FaceCrop> crops, const std::string&) override {
    const json& section = script_->face;
    // a tracklet id is more specific than its clip id
    if (auto it = section.find("by_tracklet"); it != section.end() && it->contains(crops.front().tracklet_id)) {
      return as_text(&(*it)[crops.front().tracklet_id], "");
    }
    return as_text(lookup(section, checksum_of(crops), crops.front().clip_id),
                   "The face looks relaxed with a neutral mouth and steady gaze.");
  }

 private:
  std::shared_ptr<const ScriptTable> script_;
};

class MockAgeGender final : public AgeGenderEstimator {
 public:
  MockAgeGender(BackendDescriptor d, std::shared_ptr<const ScriptTable> s)
      : AgeGenderEstimator(std::move(d)), script_(std::move(s)) {}

 protected:
  AgeGenderEstimate do_estimate(const Image& crop) override {
    const json* e = lookup(script_->age_gender, to_hex(crop.checksum()), "");
    if (e == nullptr) return {30.0, Gender::FEMALE, 0.5};
    try {
      return {e->at("age_years").get<double>(), parse_gender(e->at("gender").get<std::string>()),
              e->at("confidence").get<double>()};
    } catch (const json::exception& ex) {
      throw ConfigError(std::string("bad age_gender script entry: ") + ex.what());
    }
  }

 private:
  std::shared_ptr<const ScriptTable> script_;
};

class MockAudioAnalyzer final : public AudioAnalyzer {
 public:
  MockAudioAnalyzer(BackendDescriptor d, std::shared_ptr<const ScriptTable> s)
      : AudioAnalyzer(std::move(d)), script_(std::move(s)) {}

 protected:
  AudioAnalysis do_analyze(const Waveform& wave) override {
    const json& section = script_->audio;
    const json* e = nullptr;
    if (auto it = section.find("by_checksum"); it != section.end()) {
      const std::string key = to_hex(wave.checksum());
      if (it->contains(key)) e = &(*it)[key];
    }
    if (e == nullptr && is_silent(wave)) {
      if (auto it = section.find("silence"); it != section.end()) {
        e = &*it;
      } else {
        return {"silence", "", "neutral"};
      }
    }
    if (e == nullptr) {
      if (auto it = section.find("default"); it != section.end()) e = &*it;
    }
    if (e == nullptr) return {"A person speaks in a quiet room.", "I see.", "neutral"};
    try {
      return {e->at("caption").get<std::string>(), e->value("transcript", std::string()),
              e->at("audio_emotion").get<std::string>()};
    } catch (const json::exception& ex) {
      throw ConfigError(std::string("bad audio script entry: ") + ex.what());
    }
  }

 private:
  static bool is_silent(const Waveform& w) {
    return std::all_of(w.samples.begin(), w.samples.end(), [](float s) { return std::fabs(s) < 1e-4f; });
  }
  std::shared_ptr<const ScriptTable> script_;
};

std::string task_of(const std::string& prompt) {
  for (const auto& line : split(prompt, '\n')) {
    if (starts_with_ci(line, "Task:")) return to_lower(trim(line.substr(5)));
  }
  return {};
}

std::string builtin_judge_response(const std::string& task) {
  if (task == "consistency-check") return "CONSISTENT";
  if (task == "reasoning-synthesis") {
    return "Reason: The scene, the face and the voice all point to a calm, composed state.\n"
           "Labels: neutral\nIntensity: 2";
  }
  if (task == "alignment-score" || task == "clue-overlap" || task == "label-overlap") return "Score: 5";
  return "No scripted response.";
}

class MockJudge final : public Judge {
 public:
  MockJudge(BackendDescriptor d, std::shared_ptr<const ScriptTable> s) : Judge(std::move(d)), script_(std::move(s)) {}

 protected:
  RawJudgeResponse do_judge(const std::string& prompt, const std::vector<std::string>& context) override {
    std::string haystack = prompt;
    for (const auto& doc : context) haystack += "\n" + doc;
    const json& section = script_->judge;
    if (auto it = section.find("rules"); it != section.end()) {
      for (const auto& rule : *it) {
        const auto& needles = rule.at("match");
        const bool hit = std::all_of(needles.begin(), needles.end(), [&](const json& n) {
          return haystack.find(n.get<std::string>()) != std::string::npos;
        });
        if (hit) return {rule.at("response").get<std::string>(), std::nullopt, {}};
      }
    }
    const std::string task = task_of(prompt);
    if (auto it = section.find("by_task"); it != section.end() && it->contains(task)) {
      return {(*it)[task].get<std::string>(), std::nullopt, {}};
    }
    if (auto it = section.find("default"); it != section.end()) return {it->get<std::string>(), std::nullopt, {}};
    return {builtin_judge_response(task), std::nullopt, {}};
  }

 private:
  std::shared_ptr<const ScriptTable> script_;
};

std::vector<Detection> detections_from_json(const json& list) {
  std::vector<Detection> out;
  for (const auto& b : list) {
    if (!b.is_array() || (b.size() != 4 && b.size() != 5)) {
      throw ConfigError("detector boxes must be [x0, y0, x1, y1] or [x0, y0, x1, y1, confidence]");
    }
    Detection d;
    d.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    d.confidence = b.size() == 5 ? b[4].get<double>() : 1.0;
    out.push_back(d);
  }
  return out;
}

class MockFaceDetector final : public FaceDetectorBackend {
 public:
  MockFaceDetector(BackendDescriptor d, std::shared_ptr<const ScriptTable> s)
      : FaceDetectorBackend(std::move(d)), script_(std::move(s)) {}

  // Entries are either a box list applied to every frame, or
  // {"boxes": [...], "frames": {"<index>": [...]}, "fail": [index, ...]}.
  std::vector<Detection> detect(const Frame& frame) override {
    const json* e = lookup(script_->detector, to_hex(frame.image.checksum()), frame.clip_id);
    if (e == nullptr) return {{{0.3, 0.2, 0.7, 0.8}, 0.95}};
    if (e->is_array()) return detections_from_json(*e);
    const std::string idx = std::to_string(frame.index);
    if (auto it = e->find("fail"); it != e->end()) {
      for (const auto& f : *it) {
        if (f.get<int>() == frame.index) throw BackendError(id(), "scripted failure on frame " + idx);
      }
    }
    if (auto it = e->find("frames"); it != e->end() && it->contains(idx)) return detections_from_json((*it)[idx]);
    if (auto it = e->find("boxes"); it != e->end()) return detections_from_json(*it);
    return {};
  }

 private:
  std::shared_ptr<const ScriptTable> script_;
};

}  // namespace

std::unique_ptr<VideoDescriber> make_mock_video_describer(BackendDescriptor d, std::shared_ptr<const ScriptTable> s) {
  return std::make_unique<MockVideoDescriber>(std::move(d), std::move(s));
}
std::unique_ptr<FaceDescriber> make_mock_face_describer(BackendDescriptor d, std::shared_ptr<const ScriptTable> s) {
  return std::make_unique<MockFaceDescriber>(std::move(d), std::move(s));
}
std::unique_ptr<AgeGenderEstimator> make_mock_age_gender(BackendDescriptor d, std::shared_ptr<const ScriptTable> s) {
  return std::make_unique<MockAgeGender>(std::move(d), std::move(s));
}
std::unique_ptr<AudioAnalyzer> make_mock_audio_analyzer(BackendDescriptor d, std::shared_ptr<const ScriptTable> s) {
  return std::make_unique<MockAudioAnalyzer>(std::move(d), std::move(s));
}
std::unique_ptr<Judge> make_mock_judge(BackendDescriptor d, std::shared_ptr<const ScriptTable> s) {
  return std::make_unique<MockJudge>(std::move(d), std::move(s));
}
std::unique_ptr<FaceDetectorBackend> make_mock_face_detector(BackendDescriptor d,
                                                             std::shared_ptr<const ScriptTable> s) {
  return std::make_unique<MockFaceDetector>(std::move(d), std::move(s));
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

void BackendRegistry::add(std::unique_ptr<Backend> backend) {
  if (!backend) throw ConfigError("null backend");
  const std::string id = backend->id();
  if (backends_.count(id)) throw ConfigError("duplicate backend_id '" + id + "'");
  backends_.emplace(id, std::move(backend));
}

bool BackendRegistry::contains(const std::string& id) const { return backends_.count(id) > 0; }

const Backend& BackendRegistry::get(const std::string& id) const {
  auto it = backends_.find(id);
  if (it == backends_.end()) throw ConfigError("unknown backend id '" + id + "'");
  return *it->second;
}

Backend& BackendRegistry::checked(const std::string& id, Capability cap) const {
  auto it = backends_.find(id);
  if (it == backends_.end()) throw ConfigError("unknown backend id '" + id + "'");
  if (it->second->descriptor().capability != cap) {
    throw ConfigError("backend '" + id + "' has capability " + std::string(to_string(it->second->descriptor().capability)) +
                      ", expected " + std::string(to_string(cap)));
  }
  return *it->second;
}

VideoDescriber& BackendRegistry::video(const std::string& id) const {
  return dynamic_cast<VideoDescriber&>(checked(id, Capability::VIDEO_DESCRIBE));
}
FaceDescriber& BackendRegistry::face(const std::string& id) const {
  return dynamic_cast<FaceDescriber&>(checked(id, Capability::FACE_DESCRIBE));
}
AgeGenderEstimator& BackendRegistry::age_gender(const std::string& id) const {
  return dynamic_cast<AgeGenderEstimator&>(checked(id, Capability::AGE_GENDER));
}
AudioAnalyzer& BackendRegistry::audio(const std::string& id) const {
  return dynamic_cast<AudioAnalyzer&>(checked(id, Capability::AUDIO_ANALYZE));
}
Judge& BackendRegistry::judge(const std::string& id) const {
  return dynamic_cast<Judge&>(checked(id, Capability::JUDGE));
}
FaceDetectorBackend& BackendRegistry::detector(const std::string& id) const {
  return dynamic_cast<FaceDetectorBackend&>(checked(id, Capability::FACE_DETECT));
}

std::vector<std::string> BackendRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : backends_) out.push_back(id);
  return out;
}

std::vector<BackendDescriptor> default_mock_descriptors() {
  auto mk = [](std::string id, Capability c) {
    BackendDescriptor d;
    d.backend_id = std::move(id);
    d.capability = c;
    return d;
  };
  return {mk("mock-video", Capability::VIDEO_DESCRIBE), mk("mock-face", Capability::FACE_DESCRIBE),
          mk("mock-age-gender", Capability::AGE_GENDER), mk("mock-audio", Capability::AUDIO_ANALYZE),
          mk("mock-judge", Capability::JUDGE),           mk("mock-detector", Capability::FACE_DETECT)};
}

std::string env_key_for(const std::string& backend_id, std::string_view suffix) {
  std::string key = "OMNI_BACKEND_";
  for (char c : backend_id) {
    key += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                                                        : '_';
  }
  key += '_';
  key += suffix;
  return key;
}

std::unique_ptr<BackendRegistry> make_registry(const json& config, const std::filesystem::path& base_dir,
                                               std::optional<RegistryMode> mode_override) {
  RegistryMode mode = RegistryMode::kMock;
  const std::string mode_name = config.value("mode", std::string("mock"));
  if (mode_name == "http") {
    mode = RegistryMode::kHttp;
  } else if (mode_name != "mock") {
    throw ConfigError("backend mode must be 'mock' or 'http', got '" + mode_name + "'");
  }
  if (mode_override) mode = *mode_override;

  std::vector<BackendDescriptor> descriptors;
  if (config.contains("backends")) {
    for (const auto& j : config["backends"]) descriptors.push_back(descriptor_from_json(j));
  } else {
    descriptors = default_mock_descriptors();
  }
  for (auto& d : descriptors) {
    if (const char* e = std::getenv(env_key_for(d.backend_id, "ENDPOINT").c_str()); e && *e) d.endpoint = e;
    if (const char* k = std::getenv(env_key_for(d.backend_id, "API_KEY").c_str()); k && *k) d.api_key = k;
  }

  auto registry = std::make_unique<BackendRegistry>();
  if (mode == RegistryMode::kHttp) {
    for (auto& d : descriptors) {
      if (!d.endpoint) throw ConfigError("http backend '" + d.backend_id + "' has no endpoint");
      registry->add(make_http_backend(std::move(d)));
    }
    return registry;
  }

  auto script = std::make_shared<ScriptTable>();
  if (config.contains("script") && !config["script"].is_null()) {
    if (config["script"].is_string()) {
      std::filesystem::path p = config["script"].get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      *script = ScriptTable::load(p);
    } else {
      *script = ScriptTable::from_json(config["script"]);
    }
  }
  std::shared_ptr<const ScriptTable> shared = script;
  for (auto& d : descriptors) {
    switch (d.capability) {
      case Capability::VIDEO_DESCRIBE: registry->add(make_mock_video_describer(std::move(d), shared)); break;
      case Capability::FACE_DESCRIBE: registry->add(make_mock_face_describer(std::move(d), shared)); break;
      case Capability::AGE_GENDER: registry->add(make_mock_age_gender(std::move(d), shared)); break;
      case Capability::AUDIO_ANALYZE: registry->add(make_mock_audio_analyzer(std::move(d), shared)); break;
      case Capability::JUDGE: registry->add(make_mock_judge(std::move(d), shared)); break;
      case Capability::FACE_DETECT: registry->add(make_mock_face_detector(std::move(d), shared)); break;
    }
  }
  return registry;
}

}  // namespace omni
