// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace omni {

using json = nlohmann::json;

enum class SourceDataset { DFEW, MAFW, MER24, CAER, AFEW_VA, FERV39K, RAVDESS, OTHER };

std::string_view to_string(SourceDataset source);
SourceDataset parse_source_dataset(std::string_view name);

/// One source video with its audio track, ground-truth label and provenance.
struct MediaClip {
  std::string clip_id;
  SourceDataset source_dataset = SourceDataset::OTHER;
  std::string media_uri;
  double duration_s = 0.0;
  double fps = 0.0;
  std::optional<std::string> ground_truth_label;
  std::optional<std::string> subtitle;

  void validate() const;
  bool operator==(const MediaClip&) const = default;
};

enum class EvidenceKind { VISUAL_GLOBAL, FACIAL, AUDIO_CAPTION, ASR_TRANSCRIPT, AUDIO_EMOTION, AGE_GENDER };

std::string_view to_string(EvidenceKind kind);
EvidenceKind parse_evidence_kind(std::string_view name);

struct ModalityEvidence {
  EvidenceKind kind = EvidenceKind::VISUAL_GLOBAL;
  std::string text;
  std::string backend_id;
  std::optional<std::string> tracklet_id;

  void validate() const;
  bool operator==(const ModalityEvidence&) const = default;
};

enum class ReviewStatus { UNREVIEWED, SELF_REVIEWED, HUMAN_APPROVED, HUMAN_REJECTED, HUMAN_EDITED };

std::string_view to_string(ReviewStatus status);
ReviewStatus parse_review_status(std::string_view name);

using LabelSet = std::set<std::string>;

/// Trims, lowercases and deduplicates. Empty entries are dropped.
LabelSet normalize_labels(const std::vector<std::string>& raw);

/// One human review event. Prior values are captured before the verdict is
/// applied, so the trail can reconstruct every earlier version.
struct AuditEntry {
  std::string reviewer_id;
  std::string timestamp;
  std::string verdict;
  ReviewStatus prior_status = ReviewStatus::SELF_REVIEWED;
  std::string prior_reason;
  LabelSet prior_labels;
  int prior_intensity = 1;

  bool operator==(const AuditEntry&) const = default;
};

inline constexpr int kMinIntensity = 1;
inline constexpr int kMaxIntensity = 5;
inline constexpr int kMinScore = 0;
inline constexpr int kMaxScore = 10;

/// The per-clip output record of the curation pipeline.
struct ReasoningAnnotation {
  std::string clip_id;
  SourceDataset source_dataset = SourceDataset::OTHER;
  std::vector<ModalityEvidence> evidence;
  std::string reason;
  LabelSet open_vocab_labels;
  int intensity = kMinIntensity;
  std::optional<int> alignment_score;  // nullopt == UNSCORED
  ReviewStatus review_status = ReviewStatus::UNREVIEWED;
  std::vector<AuditEntry> audit;

  /// Optimistic-lock version: one increment per applied review verdict.
  std::int64_t version() const noexcept { return static_cast<std::int64_t>(audit.size()); }

  void validate() const;
  bool operator==(const ReasoningAnnotation&) const = default;
};

struct Provenance {
  int score_threshold = 5;
  std::uint64_t random_seed = 0;
  std::vector<std::string> backend_ids;
  std::string created_at;
  std::string template_hash;

  bool operator==(const Provenance&) const = default;
};

struct DatasetManifest {
  std::string name;
  std::vector<ReasoningAnnotation> records;
  std::map<SourceDataset, std::int64_t> per_source_counts;
  Provenance provenance;

  /// Recomputes per_source_counts from the records.
  void recount();
  void validate() const;
  bool operator==(const DatasetManifest&) const = default;
};

std::int64_t total_count(const std::map<SourceDataset, std::int64_t>& per_source_counts);

json to_json(const MediaClip& clip);
MediaClip clip_from_json(const json& j);
json to_json(const ModalityEvidence& evidence);
ModalityEvidence evidence_from_json(const json& j);
json to_json(const ReasoningAnnotation& record);
ReasoningAnnotation annotation_from_json(const json& j);
json header_json(const DatasetManifest& manifest);

/// Sibling header path: "<dir>/<stem>.header.json".
std::filesystem::path header_path_for(const std::filesystem::path& records_path);

/// Serializes the JSONL record body exactly as write_manifest stores it.
std::string serialize_records(const DatasetManifest& manifest);

/// Writes records (sorted by clip_id) to `destination` as JSONL and the header
/// beside it. Returns the records path.
std::filesystem::path write_manifest(const DatasetManifest& manifest,
                                     const std::filesystem::path& destination);
DatasetManifest read_manifest(const std::filesystem::path& source);

std::vector<MediaClip> read_clips(const std::filesystem::path& source);
void write_clips(const std::vector<MediaClip>& clips, const std::filesystem::path& destination);

}  // namespace omni
