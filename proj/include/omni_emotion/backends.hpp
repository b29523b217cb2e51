// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "omni_emotion/corpus.hpp"
#include "omni_emotion/media.hpp"

namespace omni {

enum class Capability { VIDEO_DESCRIBE, FACE_DESCRIBE, AGE_GENDER, AUDIO_ANALYZE, JUDGE, FACE_DETECT };

std::string_view to_string(Capability c);
Capability parse_capability(std::string_view name);

struct BackendDescriptor {
  std::string backend_id;
  Capability capability = Capability::JUDGE;
  std::optional<std::string> endpoint;
  double timeout_s = 60.0;
  int max_retries = 2;
  std::optional<std::string> api_key;

  void validate() const;
};

BackendDescriptor descriptor_from_json(const json& j);

struct JudgeResult {
  std::string verdict_text;
  std::optional<int> score;
  std::string raw_response;
};

struct AgeGenderEstimate {
  double age_years = 0.0;
  Gender gender = Gender::FEMALE;
  double confidence = 0.0;
};

struct AudioAnalysis {
  std::string caption;
  std::string transcript;  // may be empty for non-speech audio
  std::string audio_emotion;
};

/// Outcome of scanning a judge response for its score.
struct ScoreParse {
  std::optional<int> score;
  std::string error;  // set when score is empty
};

/// First integer token in the text; it must lie in [0, 10].
ScoreParse parse_judge_score(std::string_view text);

class Backend {
 public:
  explicit Backend(BackendDescriptor descriptor);
  virtual ~Backend() = default;
  const BackendDescriptor& descriptor() const noexcept { return descriptor_; }
  const std::string& id() const noexcept { return descriptor_.backend_id; }

 private:
  BackendDescriptor descriptor_;
};

// Each capability is a non-virtual contract check wrapped around a virtual
// hook, so every implementation (mock or remote) is held to the same output
// contract.

class VideoDescriber : public Backend {
 public:
  using Backend::Backend;
  std::string describe_video(std::span<const Frame> frames, const std::string& prompt);

 protected:
  virtual std::string do_describe_video(std::span<const Frame> frames, const std::string& prompt) = 0;
};

class FaceDescriber : public Backend {
 public:
  using Backend::Backend;
  std::string describe_face(std::span<const FaceCrop> crops, const std::string& prompt);

 protected:
  virtual std::string do_describe_face(std::span<const FaceCrop> crops, const std::string& prompt) = 0;
};

class AgeGenderEstimator : public Backend {
 public:
  using Backend::Backend;
  AgeGenderEstimate estimate_age_gender(const Image& face_crop);

 protected:
  virtual AgeGenderEstimate do_estimate(const Image& face_crop) = 0;
};

class AudioAnalyzer : public Backend {
 public:
  using Backend::Backend;
  AudioAnalysis analyze_audio(const Waveform& wave);

 protected:
  virtual AudioAnalysis do_analyze(const Waveform& wave) = 0;
};

class Judge : public Backend {
 public:
  using Backend::Backend;
  /// With score_required, a response without a valid score is retried up to
  /// max_retries times and then raises ScoringError.
  JudgeResult judge(const std::string& prompt, const std::vector<std::string>& context_documents,
                    bool score_required = false);

 protected:
  struct RawJudgeResponse {
    std::string text;
    std::optional<long long> score;  // structured score, when the transport has one
    std::string raw;                 // untouched response body; text when empty
  };
  virtual RawJudgeResponse do_judge(const std::string& prompt, const std::vector<std::string>& context) = 0;
};

class FaceDetectorBackend : public Backend, public FaceDetector {
 public:
  using Backend::Backend;
  const std::string& backend_id() const override { return id(); }
};

// ---------------------------------------------------------------------------
// Deterministic mocks
// ---------------------------------------------------------------------------

/// Scripted responses for every mock. Lookups go by content checksum first,
/// then clip id, then the section default. See data/fixtures for examples.
struct ScriptTable {
  json video = json::object();
  json face = json::object();
  json age_gender = json::object();
  json audio = json::object();
  json detector = json::object();
  json judge = json::object();

  static ScriptTable from_json(const json& j);
  static ScriptTable load(const std::filesystem::path& path);
};

std::string checksum_of(std::span<const Frame> frames);
std::string checksum_of(std::span<const FaceCrop> crops);

std::unique_ptr<VideoDescriber> make_mock_video_describer(BackendDescriptor d, std::shared_ptr<const ScriptTable> s);
std::unique_ptr<FaceDescriber> make_mock_face_describer(BackendDescriptor d, std::shared_ptr<const ScriptTable> s);
std::unique_ptr<AgeGenderEstimator> make_mock_age_gender(BackendDescriptor d, std::shared_ptr<const ScriptTable> s);
std::unique_ptr<AudioAnalyzer> make_mock_audio_analyzer(BackendDescriptor d, std::shared_ptr<const ScriptTable> s);
std::unique_ptr<Judge> make_mock_judge(BackendDescriptor d, std::shared_ptr<const ScriptTable> s);
std::unique_ptr<FaceDetectorBackend> make_mock_face_detector(BackendDescriptor d, std::shared_ptr<const ScriptTable> s);

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// Named backends for one run. Lookups verify the capability, so a
/// misconfigured id fails before any work starts.
class BackendRegistry {
 public:
  void add(std::unique_ptr<Backend> backend);
  bool contains(const std::string& id) const;
  const Backend& get(const std::string& id) const;

  VideoDescriber& video(const std::string& id) const;
  FaceDescriber& face(const std::string& id) const;
  AgeGenderEstimator& age_gender(const std::string& id) const;
  AudioAnalyzer& audio(const std::string& id) const;
  Judge& judge(const std::string& id) const;
  FaceDetectorBackend& detector(const std::string& id) const;

  std::vector<std::string> ids() const;

 private:
  Backend& checked(const std::string& id, Capability cap) const;
  std::map<std::string, std::unique_ptr<Backend>> backends_;
};

enum class RegistryMode { kMock, kHttp };

/// Builds a registry from
///   {"mode": "mock"|"http", "script": path, "backends": [descriptor, ...]}
/// Environment variables OMNI_BACKEND_<ID>_ENDPOINT and OMNI_BACKEND_<ID>_API_KEY
/// override endpoint and key (ID upper-cased, non-alphanumerics as '_').
std::unique_ptr<BackendRegistry> make_registry(const json& config, const std::filesystem::path& base_dir,
                                               std::optional<RegistryMode> mode_override = std::nullopt);

/// The default mock set used when a config names no backends.
std::vector<BackendDescriptor> default_mock_descriptors();

std::string env_key_for(const std::string& backend_id, std::string_view suffix);

}  // namespace omni
