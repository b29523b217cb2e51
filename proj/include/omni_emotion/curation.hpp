// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "omni_emotion/backends.hpp"
#include "omni_emotion/corpus.hpp"
#include "omni_emotion/media.hpp"
#include "omni_emotion/templates.hpp"

namespace omni {

/// Backend ids the pipeline uses for each role.
struct BackendRoles {
  std::string detector = "mock-detector";
  std::string video = "mock-video";
  std::string face = "mock-face";
  std::string age_gender = "mock-age-gender";
  std::string audio = "mock-audio";
  std::string judge = "mock-judge";

  std::vector<std::string> ids() const;
};

/// Resolved role bindings. Resolution checks every id and capability, so a
/// bad config fails before any clip is touched.
struct Backends {
  FaceDetectorBackend* detector = nullptr;
  VideoDescriber* video = nullptr;
  FaceDescriber* face = nullptr;
  AgeGenderEstimator* age_gender = nullptr;
  AudioAnalyzer* audio = nullptr;
  Judge* judge = nullptr;

  static Backends resolve(const BackendRegistry& registry, const BackendRoles& roles);
};

struct CurationConfig {
  int score_threshold = 5;
  int hre_quota_per_source = 700;
  std::map<SourceDataset, int> quota_overrides;
  std::set<SourceDataset> excluded_sources{SourceDataset::RAVDESS};
  std::uint64_t random_seed = 0;
  int workers = 1;
  double sparse_rate_fps = 1.0;
  double dense_rate_fps = kDefaultDenseRateFps;
  TrackerOptions tracker;
  BackendRoles roles;
  std::string created_at = "1970-01-01T00:00:00Z";
  const TemplateSet* templates = nullptr;  // builtin when null

  void validate() const;
  int quota_for(SourceDataset source) const;
  const TemplateSet& prompt_templates() const { return templates ? *templates : TemplateSet::builtin(); }
};

// ---------------------------------------------------------------------------
// Per-clip stages
// ---------------------------------------------------------------------------

/// Gathers the evidence bundle for one clip. Backend errors propagate; the
/// batch runner turns them into FAILED entries.
std::vector<ModalityEvidence> annotate_clip(const MediaClip& clip, const Backends& backends,
                                            const CurationConfig& config = {},
                                            std::vector<FaceTracklet>* tracklets_out = nullptr);

struct ConsistencyVerdict {
  bool consistent = false;
  std::string reason;  // empty when consistent

  static ConsistencyVerdict pass() { return {true, {}}; }
  static ConsistencyVerdict discard(std::string why) { return {false, std::move(why)}; }
};

inline constexpr const char* kJudgeUnavailable = "judge-unavailable";

ConsistencyVerdict check_consistency(const std::vector<ModalityEvidence>& evidence, Judge& judge,
                                     const std::string& clip_id = "",
                                     const TemplateSet& templates = TemplateSet::builtin());

/// Parsed form of a synthesis reply ("Reason:", "Labels:", "Intensity:").
struct SynthesisReply {
  std::string reason;
  LabelSet labels;
  int intensity = kMinIntensity;
};

SynthesisReply parse_synthesis_reply(const std::string& text);

ReasoningAnnotation synthesize_annotation(const MediaClip& clip, const std::vector<ModalityEvidence>& evidence,
                                          Judge& judge, const TemplateSet& templates = TemplateSet::builtin());

/// Scores the annotation against the label and promotes it to SELF_REVIEWED.
/// On ScoringError the annotation stays UNSCORED and the error propagates.
int score_alignment(ReasoningAnnotation& annotation, const std::optional<std::string>& ground_truth_label,
                    Judge& judge, const TemplateSet& templates = TemplateSet::builtin());

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

Provenance make_provenance(const CurationConfig& config, const std::vector<std::string>& backend_ids);

DatasetManifest filter_sre(const std::vector<ReasoningAnnotation>& records, const CurationConfig& config,
                           const Provenance& provenance);
DatasetManifest filter_sre(const std::vector<ReasoningAnnotation>& records, const CurationConfig& config);

DatasetManifest sample_hre(const std::vector<ReasoningAnnotation>& candidate_pool, const DatasetManifest& sre,
                           const CurationConfig& config, const Provenance& provenance);
DatasetManifest sample_hre(const std::vector<ReasoningAnnotation>& candidate_pool, const DatasetManifest& sre,
                           const CurationConfig& config);

// ---------------------------------------------------------------------------
// Human review
// ---------------------------------------------------------------------------

enum class VerdictKind { APPROVE, REJECT, EDIT };
std::string_view to_string(VerdictKind v);
VerdictKind parse_verdict_kind(std::string_view name);

struct ReviewVerdict {
  VerdictKind kind = VerdictKind::APPROVE;
  std::optional<std::string> new_reason;
  std::optional<LabelSet> new_labels;
  std::optional<int> new_intensity;

  static ReviewVerdict approve() { return {VerdictKind::APPROVE, {}, {}, {}}; }
  static ReviewVerdict reject() { return {VerdictKind::REJECT, {}, {}, {}}; }
  static ReviewVerdict edit(std::optional<std::string> reason, std::optional<LabelSet> labels,
                            std::optional<int> intensity) {
    return {VerdictKind::EDIT, std::move(reason), std::move(labels), intensity};
  }
};

/// Applies one verdict and appends an audit entry holding the prior values.
ReasoningAnnotation record_review(const ReasoningAnnotation& annotation, const ReviewVerdict& verdict,
                                  const std::string& reviewer_id, const std::string& timestamp);

/// Reviewed records minus HUMAN_REJECTED ones, as an exportable manifest.
DatasetManifest export_reviewed(const std::vector<ReasoningAnnotation>& records, const std::string& name,
                                const Provenance& provenance);

// ---------------------------------------------------------------------------
// Batch run
// ---------------------------------------------------------------------------

enum class ClipOutcome { SRE, HRE, FILTERED_SCORE, FILTERED_SOURCE, UNSCORED, DISCARDED, SYNTHESIS_FAILED, FAILED };
std::string_view to_string(ClipOutcome o);

struct ClipReport {
  std::string clip_id;
  ClipOutcome outcome = ClipOutcome::FAILED;
  std::string cause;
};

struct RunReport {
  std::vector<ClipReport> clips;  // sorted by clip_id
  std::map<std::string, std::int64_t> counts;

  json to_json() const;
};

struct CurationResult {
  DatasetManifest sre;
  DatasetManifest hre;
  std::vector<ReasoningAnnotation> scored;  // every record that received a score
  RunReport report;
};

CurationResult run_curation(const std::vector<MediaClip>& clips, const Backends& backends,
                            const CurationConfig& config, const std::vector<std::string>& backend_ids);

}  // namespace omni
