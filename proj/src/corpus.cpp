// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "omni_emotion/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

#include "omni_emotion/error.hpp"
#include "omni_emotion/util.hpp"

namespace omni {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view name, const std::array<std::pair<E, std::string_view>, N>& table,
             std::string_view what) {
  for (const auto& [value, text] : table) {
    if (text == name) return value;
  }
  throw FormatError("unknown " + std::string(what) + " '" + std::string(name) + "'");
}

template <typename E, std::size_t N>
std::string_view enum_name(E value, const std::array<std::pair<E, std::string_view>, N>& table) {
  for (const auto& [v, text] : table) {
    if (v == value) return text;
  }
  return "?";
}

constexpr std::array<std::pair<SourceDataset, std::string_view>, 8> kSources{{
    {SourceDataset::DFEW, "DFEW"},
    {SourceDataset::MAFW, "MAFW"},
    {SourceDataset::MER24, "MER24"},
    {SourceDataset::CAER, "CAER"},
    {SourceDataset::AFEW_VA, "AFEW_VA"},
    {SourceDataset::FERV39K, "FERV39K"},
    {SourceDataset::RAVDESS, "RAVDESS"},
    {SourceDataset::OTHER, "OTHER"},
}};

constexpr std::array<std::pair<EvidenceKind, std::string_view>, 6> kKinds{{
    {EvidenceKind::VISUAL_GLOBAL, "VISUAL_GLOBAL"},
    {EvidenceKind::FACIAL, "FACIAL"},
    {EvidenceKind::AUDIO_CAPTION, "AUDIO_CAPTION"},
    {EvidenceKind::ASR_TRANSCRIPT, "ASR_TRANSCRIPT"},
    {EvidenceKind::AUDIO_EMOTION, "AUDIO_EMOTION"},
    {EvidenceKind::AGE_GENDER, "AGE_GENDER"},
}};

constexpr std::array<std::pair<ReviewStatus, std::string_view>, 5> kStatuses{{
    {ReviewStatus::UNREVIEWED, "UNREVIEWED"},
    {ReviewStatus::SELF_REVIEWED, "SELF_REVIEWED"},
    {ReviewStatus::HUMAN_APPROVED, "HUMAN_APPROVED"},
    {ReviewStatus::HUMAN_REJECTED, "HUMAN_REJECTED"},
    {ReviewStatus::HUMAN_EDITED, "HUMAN_EDITED"},
}};

const json& require(const json& j, const char* key) {
  if (!j.is_object()) throw FormatError("expected a JSON object");
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) throw FormatError(std::string("missing field '") + key + "'");
  return *it;
}

template <typename T>
T require_as(const json& j, const char* key) {
  const auto& v = require(j, key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw FormatError(std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
std::optional<T> optional_as(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw FormatError(std::string("field '") + key + "' has the wrong type");
  }
}

json labels_json(const LabelSet& labels) {
  json arr = json::array();
  for (const auto& l : labels) arr.push_back(l);
  return arr;
}

LabelSet labels_from(const json& arr, const char* key) {
  if (!arr.is_array()) throw FormatError(std::string("field '") + key + "' must be an array");
  std::vector<std::string> raw;
  for (const auto& v : arr) {
    if (!v.is_string()) throw FormatError(std::string("field '") + key + "' must hold strings");
    raw.push_back(v.get<std::string>());
  }
  return normalize_labels(raw);
}

json audit_json(const AuditEntry& a) {
  return json{{"reviewer_id", a.reviewer_id},       {"timestamp", a.timestamp},
              {"verdict", a.verdict},               {"prior_status", to_string(a.prior_status)},
              {"prior_reason", a.prior_reason},     {"prior_labels", labels_json(a.prior_labels)},
              {"prior_intensity", a.prior_intensity}};
}

AuditEntry audit_from_json(const json& j) {
  AuditEntry a;
  a.reviewer_id = require_as<std::string>(j, "reviewer_id");
  a.timestamp = require_as<std::string>(j, "timestamp");
  a.verdict = require_as<std::string>(j, "verdict");
  a.prior_status = parse_review_status(require_as<std::string>(j, "prior_status"));
  a.prior_reason = require_as<std::string>(j, "prior_reason");
  a.prior_labels = labels_from(require(j, "prior_labels"), "prior_labels");
  a.prior_intensity = require_as<int>(j, "prior_intensity");
  return a;
}

}  // namespace

std::string_view to_string(SourceDataset source) { return enum_name(source, kSources); }
SourceDataset parse_source_dataset(std::string_view name) {
  // Accept the hyphenated spelling used in the literature.
  if (name == "AFEW-VA") return SourceDataset::AFEW_VA;
  return parse_enum(name, kSources, "source_dataset");
}
std::string_view to_string(EvidenceKind kind) { return enum_name(kind, kKinds); }
EvidenceKind parse_evidence_kind(std::string_view name) {
  return parse_enum(name, kKinds, "evidence kind");
}
std::string_view to_string(ReviewStatus status) { return enum_name(status, kStatuses); }
ReviewStatus parse_review_status(std::string_view name) {
  return parse_enum(name, kStatuses, "review_status");
}

LabelSet normalize_labels(const std::vector<std::string>& raw) {
  LabelSet out;
  for (const auto& r : raw) {
    auto l = to_lower(trim(r));
    if (!l.empty()) out.insert(std::move(l));
  }
  return out;
}

void MediaClip::validate() const {
  if (clip_id.empty()) throw ValidationError("clip_id", "must be non-empty");
  if (!(duration_s > 0.0) || !std::isfinite(duration_s))
    throw ValidationError("duration_s", "must be strictly positive");
  if (!(fps > 0.0) || !std::isfinite(fps)) throw ValidationError("fps", "must be strictly positive");
}

void ModalityEvidence::validate() const {
  if (text.empty()) throw ValidationError("evidence.text", "must be non-empty");
  if ((kind == EvidenceKind::FACIAL || kind == EvidenceKind::AGE_GENDER) &&
      (!tracklet_id || tracklet_id->empty()))
    throw ValidationError("evidence.tracklet_id",
                          std::string(to_string(kind)) + " evidence must reference a tracklet");
}

void ReasoningAnnotation::validate() const {
  if (clip_id.empty()) throw ValidationError("clip_id", "must be non-empty");
  for (const auto& e : evidence) e.validate();
  if (open_vocab_labels.empty()) throw ValidationError("open_vocab_labels", "must be non-empty");
  for (const auto& l : open_vocab_labels) {
    if (l.empty() || l != to_lower(l) || l != trim(l))
      throw ValidationError("open_vocab_labels", "label '" + l + "' is not normalized lowercase");
  }
  if (intensity < kMinIntensity || intensity > kMaxIntensity)
    throw ValidationError("intensity", "must be in [1, 5], got " + std::to_string(intensity));
  if (alignment_score && (*alignment_score < kMinScore || *alignment_score > kMaxScore))
    throw ValidationError("alignment_score", "must be in [0, 10], got " + std::to_string(*alignment_score));
}

std::int64_t total_count(const std::map<SourceDataset, std::int64_t>& per_source_counts) {
  return std::accumulate(per_source_counts.begin(), per_source_counts.end(), std::int64_t{0},
                         [](std::int64_t acc, const auto& kv) { return acc + kv.second; });
}

void DatasetManifest::recount() {
  per_source_counts.clear();
  for (const auto& r : records) ++per_source_counts[r.source_dataset];
}

void DatasetManifest::validate() const {
  const auto total = total_count(per_source_counts);
  if (total != static_cast<std::int64_t>(records.size()))
    throw ValidationError("per_source_counts", "sums to " + std::to_string(total) + " but manifest has " +
                                                   std::to_string(records.size()) + " records");
  std::map<SourceDataset, std::int64_t> actual;
  std::set<std::string> ids;
  const bool is_sre = name.rfind("SRE", 0) == 0;
  for (const auto& r : records) {
    r.validate();
    if (!ids.insert(r.clip_id).second) throw ValidationError("clip_id", "duplicate '" + r.clip_id + "'");
    ++actual[r.source_dataset];
    if (is_sre && (!r.alignment_score || *r.alignment_score < provenance.score_threshold))
      throw ValidationError("alignment_score", "SRE record '" + r.clip_id + "' is below the score threshold");
  }
  for (const auto& [src, n] : per_source_counts) {
    if (n < 0) throw ValidationError("per_source_counts", "negative count");
    const auto it = actual.find(src);
    const std::int64_t have = it == actual.end() ? 0 : it->second;
    if (have != n)
      throw ValidationError("per_source_counts", "count for " + std::string(to_string(src)) +
                                                     " disagrees with records");
  }
}

json to_json(const MediaClip& c) {
  json j{{"clip_id", c.clip_id},
         {"source_dataset", to_string(c.source_dataset)},
         {"media_uri", c.media_uri},
         {"duration_s", c.duration_s},
         {"fps", c.fps}};
  if (c.ground_truth_label) j["ground_truth_label"] = *c.ground_truth_label;
  if (c.subtitle) j["subtitle"] = *c.subtitle;
  return j;
}

MediaClip clip_from_json(const json& j) {
  MediaClip c;
  c.clip_id = require_as<std::string>(j, "clip_id");
  c.source_dataset = parse_source_dataset(require_as<std::string>(j, "source_dataset"));
  c.media_uri = require_as<std::string>(j, "media_uri");
  c.duration_s = require_as<double>(j, "duration_s");
  c.fps = require_as<double>(j, "fps");
  c.ground_truth_label = optional_as<std::string>(j, "ground_truth_label");
  if (c.ground_truth_label) *c.ground_truth_label = to_lower(trim(*c.ground_truth_label));
  c.subtitle = optional_as<std::string>(j, "subtitle");
  return c;
}

json to_json(const ModalityEvidence& e) {
  json j{{"kind", to_string(e.kind)}, {"text", e.text}, {"backend_id", e.backend_id}};
  if (e.tracklet_id) j["tracklet_id"] = *e.tracklet_id;
  return j;
}

ModalityEvidence evidence_from_json(const json& j) {
  ModalityEvidence e;
  e.kind = parse_evidence_kind(require_as<std::string>(j, "kind"));
  e.text = require_as<std::string>(j, "text");
  e.backend_id = require_as<std::string>(j, "backend_id");
  e.tracklet_id = optional_as<std::string>(j, "tracklet_id");
  return e;
}

json to_json(const ReasoningAnnotation& r) {
  json evidence = json::array();
  for (const auto& e : r.evidence) evidence.push_back(to_json(e));
  json j{{"clip_id", r.clip_id},
         {"source_dataset", to_string(r.source_dataset)},
         {"evidence", std::move(evidence)},
         {"reason", r.reason},
         {"open_vocab_labels", labels_json(r.open_vocab_labels)},
         {"intensity", r.intensity},
         {"alignment_score", r.alignment_score ? json(*r.alignment_score) : json("UNSCORED")},
         {"review_status", to_string(r.review_status)}};
  if (!r.audit.empty()) {
    json audit = json::array();
    for (const auto& a : r.audit) audit.push_back(audit_json(a));
    j["audit"] = std::move(audit);
  }
  return j;
}

ReasoningAnnotation annotation_from_json(const json& j) {
  ReasoningAnnotation r;
  r.clip_id = require_as<std::string>(j, "clip_id");
  r.source_dataset = parse_source_dataset(require_as<std::string>(j, "source_dataset"));
  const auto& ev = require(j, "evidence");
  if (!ev.is_array()) throw FormatError("field 'evidence' must be an array");
  for (const auto& e : ev) r.evidence.push_back(evidence_from_json(e));
  r.reason = require_as<std::string>(j, "reason");
  r.open_vocab_labels = labels_from(require(j, "open_vocab_labels"), "open_vocab_labels");
  r.intensity = require_as<int>(j, "intensity");
  const auto& score = require(j, "alignment_score");
  if (score.is_string()) {
    if (score.get<std::string>() != "UNSCORED") throw FormatError("field 'alignment_score' is invalid");
  } else if (score.is_number_integer()) {
    r.alignment_score = score.get<int>();
  } else {
    throw FormatError("field 'alignment_score' has the wrong type");
  }
  r.review_status = parse_review_status(require_as<std::string>(j, "review_status"));
  if (const auto it = j.find("audit"); it != j.end()) {
    if (!it->is_array()) throw FormatError("field 'audit' must be an array");
    for (const auto& a : *it) r.audit.push_back(audit_from_json(a));
  }
  return r;
}

json header_json(const DatasetManifest& m) {
  json counts = json::object();
  for (const auto& [src, n] : m.per_source_counts) counts[std::string(to_string(src))] = n;
  auto backend_ids = m.provenance.backend_ids;
  std::sort(backend_ids.begin(), backend_ids.end());
  return json{{"name", m.name},
              {"count", m.records.size()},
              {"per_source_counts", std::move(counts)},
              {"provenance",
               {{"score_threshold", m.provenance.score_threshold},
                {"random_seed", m.provenance.random_seed},
                {"backend_ids", backend_ids},
                {"created_at", m.provenance.created_at},
                {"template_hash", m.provenance.template_hash}}}};
}

std::filesystem::path header_path_for(const std::filesystem::path& records_path) {
  auto p = records_path;
  p.replace_filename(records_path.stem().string() + ".header.json");
  return p;
}

std::string serialize_records(const DatasetManifest& manifest) {
  std::vector<const ReasoningAnnotation*> sorted;
  sorted.reserve(manifest.records.size());
  for (const auto& r : manifest.records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->clip_id < b->clip_id; });
  std::string body;
  for (const auto* r : sorted) {
    body += to_json(*r).dump();
    body += '\n';
  }
  return body;
}

std::filesystem::path write_manifest(const DatasetManifest& manifest,
                                     const std::filesystem::path& destination) {
  manifest.validate();
  write_file_atomic(destination, serialize_records(manifest));
  write_file_atomic(header_path_for(destination), header_json(manifest).dump(2) + "\n");
  return destination;
}

DatasetManifest read_manifest(const std::filesystem::path& source) {
  const auto hpath = header_path_for(source);
  if (!std::filesystem::exists(hpath))
    throw FormatError("manifest header '" + hpath.string() + "' is missing");
  json header;
  try {
    header = json::parse(read_file(hpath));
  } catch (const json::parse_error& e) {
    throw FormatError("manifest header is not valid JSON: " + std::string(e.what()));
  }

  DatasetManifest m;
  std::int64_t declared_count = 0;
  try {
    m.name = require_as<std::string>(header, "name");
    declared_count = require_as<std::int64_t>(header, "count");
    for (const auto& [k, v] : require(header, "per_source_counts").items())
      m.per_source_counts[parse_source_dataset(k)] = v.get<std::int64_t>();
    const auto& p = require(header, "provenance");
    m.provenance.score_threshold = require_as<int>(p, "score_threshold");
    m.provenance.random_seed = require_as<std::uint64_t>(p, "random_seed");
    m.provenance.backend_ids = require_as<std::vector<std::string>>(p, "backend_ids");
    m.provenance.created_at = require_as<std::string>(p, "created_at");
    m.provenance.template_hash = optional_as<std::string>(p, "template_hash").value_or("");
  } catch (const FormatError& e) {
    throw FormatError("manifest header: " + std::string(e.what()));
  }

  std::istringstream in(read_file(source));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      m.records.push_back(annotation_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, e.what());
    } catch (const FormatError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (declared_count != static_cast<std::int64_t>(m.records.size()))
    throw FormatError("header count " + std::to_string(declared_count) + " disagrees with " +
                      std::to_string(m.records.size()) + " record lines");
  m.validate();
  return m;
}

std::vector<MediaClip> read_clips(const std::filesystem::path& source) {
  std::istringstream in(read_file(source));
  std::vector<MediaClip> clips;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto clip = clip_from_json(json::parse(line));
      clip.validate();
      if (!ids.insert(clip.clip_id).second) throw FormatError("duplicate clip_id '" + clip.clip_id + "'");
      clips.push_back(std::move(clip));
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, e.what());
    } catch (const FormatError& e) {
      throw ParseError(line_no, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return clips;
}

void write_clips(const std::vector<MediaClip>& clips, const std::filesystem::path& destination) {
  std::string body;
  for (const auto& c : clips) {
    c.validate();
    body += to_json(c).dump();
    body += '\n';
  }
  write_file_atomic(destination, body);
}

}  // namespace omni
