// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "omni_emotion/curation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <thread>

#include "omni_emotion/error.hpp"
#include "omni_emotion/log.hpp"
#include "omni_emotion/util.hpp"

namespace omni {

std::vector<std::string> BackendRoles::ids() const {
  std::set<std::string> s{detector, video, face, age_gender, audio, judge};
  return {s.begin(), s.end()};
}

Backends Backends::resolve(const BackendRegistry& registry, const BackendRoles& roles) {
  Backends b;
  b.detector = &registry.detector(roles.detector);
  b.video = &registry.video(roles.video);
  b.face = &registry.face(roles.face);
  b.age_gender = &registry.age_gender(roles.age_gender);
  b.audio = &registry.audio(roles.audio);
  b.judge = &registry.judge(roles.judge);
  return b;
}

void CurationConfig::validate() const {
  if (score_threshold < kMinScore || score_threshold > kMaxScore) {
    throw ValidationError("score_threshold", "must be in [0, 10]");
  }
  if (hre_quota_per_source < 0) throw ValidationError("hre_quota_per_source", "must be >= 0");
  for (const auto& [source, q] : quota_overrides) {
    if (q < 0) throw ValidationError("hre_quota_per_source", "override for " + std::string(to_string(source)) + " is negative");
  }
  if (workers < 1) throw ValidationError("workers", "must be >= 1");
  if (!(sparse_rate_fps > 0.0)) throw ValidationError("sparse_rate_fps", "must be > 0");
  if (!(dense_rate_fps > 0.0)) throw ValidationError("dense_rate_fps", "must be > 0");
}

int CurationConfig::quota_for(SourceDataset source) const {
  auto it = quota_overrides.find(source);
  return it == quota_overrides.end() ? hre_quota_per_source : it->second;
}

// ---------------------------------------------------------------------------

namespace {

std::string format_age_gender(const AgeGenderEstimate& e) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "Estimated age %.0f, %s (confidence %.2f)", e.age_years,
                to_lower(to_string(e.gender)).c_str(), e.confidence);
  return buf;
}

std::string evidence_block(const std::vector<ModalityEvidence>& evidence) {
  std::string out;
  for (const auto& e : evidence) {
    out += "- [";
    out += to_string(e.kind);
    if (e.tracklet_id) out += " " + *e.tracklet_id;
    out += "] " + e.text + "\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

}  // namespace

std::vector<ModalityEvidence> annotate_clip(const MediaClip& clip, const Backends& backends,
                                            const CurationConfig& config, std::vector<FaceTracklet>* tracklets_out) {
  clip.validate();
  const TemplateSet& templates = config.prompt_templates();
  auto source = open_media(clip);
  std::vector<ModalityEvidence> evidence;

  const auto frames = sample_frames(clip, *source, config.sparse_rate_fps);
  const std::string video_prompt = templates.render("video_describe", {{"clip_id", clip.clip_id}});
  evidence.push_back({EvidenceKind::VISUAL_GLOBAL, backends.video->describe_video(frames, video_prompt),
                      backends.video->id(), std::nullopt});

  TrackerOptions tracker = config.tracker;
  tracker.rate_fps = config.sparse_rate_fps;
  auto tracklets = extract_tracklets(clip, *backends.detector, *source, tracker);
  for (auto& t : tracklets) {
    const auto crops = crop_tracklet_frames(clip, t, *source, config.dense_rate_fps);
    const std::string face_prompt =
        templates.render("face_describe", {{"clip_id", clip.clip_id}, {"tracklet_id", t.tracklet_id}});
    evidence.push_back({EvidenceKind::FACIAL, backends.face->describe_face(crops, face_prompt), backends.face->id(),
                        t.tracklet_id});
    const AgeGenderEstimate ag = backends.age_gender->estimate_age_gender(crops[crops.size() / 2].image);
    t.age_years = ag.age_years;
    t.gender = ag.gender;
    t.gender_confidence = ag.confidence;
    evidence.push_back({EvidenceKind::AGE_GENDER, format_age_gender(ag), backends.age_gender->id(), t.tracklet_id});
  }

  if (auto wave = source->audio(); wave && !wave->samples.empty()) {
    const Waveform w16 = resample_audio(*wave);
    const AudioAnalysis a = backends.audio->analyze_audio(w16);
    const std::string& id = backends.audio->id();
    evidence.push_back({EvidenceKind::AUDIO_CAPTION, a.caption, id, std::nullopt});
    evidence.push_back(
        {EvidenceKind::ASR_TRANSCRIPT, a.transcript.empty() ? "(no speech detected)" : a.transcript, id, std::nullopt});
    evidence.push_back({EvidenceKind::AUDIO_EMOTION, a.audio_emotion, id, std::nullopt});
  }

  if (tracklets_out) *tracklets_out = std::move(tracklets);
  return evidence;
}

ConsistencyVerdict check_consistency(const std::vector<ModalityEvidence>& evidence, Judge& judge,
                                     const std::string& clip_id, const TemplateSet& templates) {
  if (evidence.empty()) throw PreconditionError("check_consistency needs at least one evidence item");
  if (evidence.size() == 1) return ConsistencyVerdict::pass();

  const std::string prompt =
      templates.render("consistency_check", {{"clip_id", clip_id}, {"evidence", evidence_block(evidence)}});
  std::vector<std::string> docs;
  for (const auto& e : evidence) docs.push_back(e.text);

  JudgeResult r;
  try {
    r = judge.judge(prompt, docs, false);
  } catch (const BackendError& e) {
    log_warning(std::string("consistency check for '") + clip_id + "': " + e.what());
    return ConsistencyVerdict::discard(kJudgeUnavailable);
  }
  for (const auto& raw_line : split(r.verdict_text, '\n')) {
    const std::string line = trim(raw_line);
    if (line.empty()) continue;
    if (starts_with_ci(line, "INCONSISTENT")) {
      std::string why = line.substr(std::string_view("INCONSISTENT").size());
      why = trim(why);
      if (!why.empty() && why.front() == ':') why = trim(why.substr(1));
      return ConsistencyVerdict::discard(why.empty() ? "inconsistent evidence" : why);
    }
    if (starts_with_ci(line, "CONSISTENT")) return ConsistencyVerdict::pass();
    break;
  }
  return ConsistencyVerdict::discard("unparseable consistency verdict");
}

SynthesisReply parse_synthesis_reply(const std::string& text) {
  std::optional<std::string> reason;
  std::optional<LabelSet> labels;
  std::optional<int> intensity;
  bool in_reason = false;
  for (const auto& raw_line : split(text, '\n')) {
    const std::string line = trim(raw_line);
    if (starts_with_ci(line, "Reason:")) {
      reason = trim(line.substr(7));
      in_reason = true;
    } else if (starts_with_ci(line, "Labels:")) {
      labels = normalize_labels(split(line.substr(7), ','));
      in_reason = false;
    } else if (starts_with_ci(line, "Intensity:")) {
      const std::string v = trim(line.substr(10));
      std::size_t end = 0;
      while (end < v.size() && std::isdigit(static_cast<unsigned char>(v[end]))) ++end;
      if (end == 0 || end > 2 || (end < v.size() && !std::isspace(static_cast<unsigned char>(v[end])) && v[end] != '/')) {
        throw SynthesisError("intensity is not an integer: '" + v + "'");
      }
      intensity = std::stoi(v.substr(0, end));
      in_reason = false;
    } else if (in_reason && !line.empty()) {
      *reason += " " + line;
    }
  }
  if (!reason || reason->empty()) throw SynthesisError("reply has no Reason line");
  if (!labels) throw SynthesisError("reply has no Labels line");
  if (labels->empty()) throw SynthesisError("Labels line is empty");
  if (!intensity) throw SynthesisError("reply has no Intensity line");
  if (*intensity < kMinIntensity || *intensity > kMaxIntensity) {
    throw SynthesisError("intensity " + std::to_string(*intensity) + " outside [1, 5]");
  }
  return {*reason, *labels, *intensity};
}

ReasoningAnnotation synthesize_annotation(const MediaClip& clip, const std::vector<ModalityEvidence>& evidence,
                                          Judge& judge, const TemplateSet& templates) {
  if (evidence.empty()) throw PreconditionError("synthesize_annotation needs evidence");
  const std::string prompt = templates.render(
      "reasoning_synthesis", {{"clip_id", clip.clip_id},
                              {"subtitle", clip.subtitle.value_or("(none)")},
                              {"evidence", evidence_block(evidence)}});
  std::vector<std::string> docs;
  for (const auto& e : evidence) docs.push_back(e.text);
  const JudgeResult r = judge.judge(prompt, docs, false);
  SynthesisReply reply;
  try {
    reply = parse_synthesis_reply(r.verdict_text);
  } catch (const SynthesisError& e) {
    throw SynthesisError("clip '" + clip.clip_id + "': " + e.what());
  }
  ReasoningAnnotation a;
  a.clip_id = clip.clip_id;
  a.source_dataset = clip.source_dataset;
  a.evidence = evidence;
  a.reason = std::move(reply.reason);
  a.open_vocab_labels = std::move(reply.labels);
  a.intensity = reply.intensity;
  a.review_status = ReviewStatus::UNREVIEWED;
  a.validate();
  return a;
}

int score_alignment(ReasoningAnnotation& annotation, const std::optional<std::string>& ground_truth_label,
                    Judge& judge, const TemplateSet& templates) {
  if (!ground_truth_label || trim(*ground_truth_label).empty()) {
    throw PreconditionError("clip '" + annotation.clip_id + "' has no ground-truth label");
  }
  const std::vector<std::string> labels(annotation.open_vocab_labels.begin(), annotation.open_vocab_labels.end());
  const std::string prompt = templates.render("alignment_score", {{"clip_id", annotation.clip_id},
                                                                  {"ground_truth_label", *ground_truth_label},
                                                                  {"reason", annotation.reason},
                                                                  {"labels", join(labels, ", ")}});
  annotation.alignment_score.reset();
  const JudgeResult r = judge.judge(prompt, {annotation.reason, *ground_truth_label}, true);
  annotation.alignment_score = r.score;
  annotation.review_status = ReviewStatus::SELF_REVIEWED;
  return *r.score;
}

// ---------------------------------------------------------------------------

Provenance make_provenance(const CurationConfig& config, const std::vector<std::string>& backend_ids) {
  Provenance p;
  p.score_threshold = config.score_threshold;
  p.random_seed = config.random_seed;
  p.backend_ids = backend_ids;
  std::sort(p.backend_ids.begin(), p.backend_ids.end());
  p.backend_ids.erase(std::unique(p.backend_ids.begin(), p.backend_ids.end()), p.backend_ids.end());
  p.created_at = config.created_at;
  p.template_hash = config.prompt_templates().hash();
  return p;
}

namespace {

bool exportable(const ReasoningAnnotation& r) {
  return r.alignment_score.has_value() && r.review_status != ReviewStatus::UNREVIEWED &&
         r.review_status != ReviewStatus::HUMAN_REJECTED;
}

}  // namespace

DatasetManifest filter_sre(const std::vector<ReasoningAnnotation>& records, const CurationConfig& config,
                           const Provenance& provenance) {
  config.validate();
  DatasetManifest m;
  m.name = "SRE";
  m.provenance = provenance;
  for (const auto& r : records) {
    if (!exportable(r)) continue;
    if (*r.alignment_score < config.score_threshold) continue;
    if (config.excluded_sources.count(r.source_dataset)) continue;
    m.records.push_back(r);
  }
  std::sort(m.records.begin(), m.records.end(),
            [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
  m.recount();
  m.validate();
  return m;
}

DatasetManifest filter_sre(const std::vector<ReasoningAnnotation>& records, const CurationConfig& config) {
  return filter_sre(records, config, make_provenance(config, config.roles.ids()));
}

DatasetManifest sample_hre(const std::vector<ReasoningAnnotation>& candidate_pool, const DatasetManifest& sre,
                           const CurationConfig& config, const Provenance& provenance) {
  config.validate();
  std::set<std::string> taken;
  for (const auto& r : sre.records) taken.insert(r.clip_id);

  std::map<SourceDataset, std::vector<const ReasoningAnnotation*>> by_source;
  for (const auto& r : candidate_pool) {
    if (!exportable(r) || taken.count(r.clip_id) || config.excluded_sources.count(r.source_dataset)) continue;
    by_source[r.source_dataset].push_back(&r);
  }

  DatasetManifest m;
  m.name = "HRE";
  m.provenance = provenance;
  for (auto& [source, pool] : by_source) {
    std::sort(pool.begin(), pool.end(), [](const auto* a, const auto* b) { return a->clip_id < b->clip_id; });
    pool.erase(std::unique(pool.begin(), pool.end(),
                           [](const auto* a, const auto* b) { return a->clip_id == b->clip_id; }),
               pool.end());
    std::mt19937_64 rng(derive_seed(config.random_seed, "hre/" + std::string(to_string(source))));
    seeded_shuffle(pool, rng);
    const std::size_t take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(config.quota_for(source)));
    for (std::size_t i = 0; i < take; ++i) m.records.push_back(*pool[i]);
  }
  std::sort(m.records.begin(), m.records.end(),
            [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
  m.recount();
  m.validate();
  return m;
}

DatasetManifest sample_hre(const std::vector<ReasoningAnnotation>& candidate_pool, const DatasetManifest& sre,
                           const CurationConfig& config) {
  return sample_hre(candidate_pool, sre, config, make_provenance(config, config.roles.ids()));
}

// ---------------------------------------------------------------------------

std::string_view to_string(VerdictKind v) {
  switch (v) {
    case VerdictKind::APPROVE: return "APPROVE";
    case VerdictKind::REJECT: return "REJECT";
    case VerdictKind::EDIT: return "EDIT";
  }
  return "UNKNOWN";
}

VerdictKind parse_verdict_kind(std::string_view name) {
  const std::string n = to_lower(trim(name));
  if (n == "approve") return VerdictKind::APPROVE;
  if (n == "reject") return VerdictKind::REJECT;
  if (n == "edit") return VerdictKind::EDIT;
  throw ValidationError("verdict", "unknown verdict '" + std::string(name) + "'");
}

ReasoningAnnotation record_review(const ReasoningAnnotation& annotation, const ReviewVerdict& verdict,
                                  const std::string& reviewer_id, const std::string& timestamp) {
  if (annotation.review_status != ReviewStatus::SELF_REVIEWED &&
      annotation.review_status != ReviewStatus::HUMAN_EDITED) {
    throw StateError("cannot review '" + annotation.clip_id + "' in status " +
                     std::string(to_string(annotation.review_status)));
  }
  if (trim(reviewer_id).empty()) throw ValidationError("reviewer_id", "must be non-empty");

  ReasoningAnnotation out = annotation;
  AuditEntry entry;
  entry.reviewer_id = reviewer_id;
  entry.timestamp = timestamp;
  entry.verdict = std::string(to_string(verdict.kind));
  entry.prior_status = annotation.review_status;
  entry.prior_reason = annotation.reason;
  entry.prior_labels = annotation.open_vocab_labels;
  entry.prior_intensity = annotation.intensity;

  switch (verdict.kind) {
    case VerdictKind::APPROVE: out.review_status = ReviewStatus::HUMAN_APPROVED; break;
    case VerdictKind::REJECT: out.review_status = ReviewStatus::HUMAN_REJECTED; break;
    case VerdictKind::EDIT:
      if (!verdict.new_reason && !verdict.new_labels && !verdict.new_intensity) {
        throw ValidationError("edits", "EDIT must change at least one field");
      }
      if (verdict.new_reason) {
        if (trim(*verdict.new_reason).empty()) throw ValidationError("reason", "must be non-empty");
        out.reason = trim(*verdict.new_reason);
      }
      if (verdict.new_labels) {
        out.open_vocab_labels = normalize_labels({verdict.new_labels->begin(), verdict.new_labels->end()});
      }
      if (verdict.new_intensity) out.intensity = *verdict.new_intensity;
      out.review_status = ReviewStatus::HUMAN_EDITED;
      break;
  }
  out.audit.push_back(std::move(entry));
  out.validate();
  return out;
}

DatasetManifest export_reviewed(const std::vector<ReasoningAnnotation>& records, const std::string& name,
                                const Provenance& provenance) {
  DatasetManifest m;
  m.name = name;
  m.provenance = provenance;
  for (const auto& r : records) {
    if (exportable(r)) m.records.push_back(r);
  }
  std::sort(m.records.begin(), m.records.end(),
            [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
  m.recount();
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ClipOutcome o) {
  switch (o) {
    case ClipOutcome::SRE: return "SRE";
    case ClipOutcome::HRE: return "HRE";
    case ClipOutcome::FILTERED_SCORE: return "FILTERED_SCORE";
    case ClipOutcome::FILTERED_SOURCE: return "FILTERED_SOURCE";
    case ClipOutcome::UNSCORED: return "UNSCORED";
    case ClipOutcome::DISCARDED: return "DISCARDED";
    case ClipOutcome::SYNTHESIS_FAILED: return "SYNTHESIS_FAILED";
    case ClipOutcome::FAILED: return "FAILED";
  }
  return "UNKNOWN";
}

json RunReport::to_json() const {
  json clips_json = json::array();
  for (const auto& c : clips) {
    json j = {{"clip_id", c.clip_id}, {"outcome", std::string(to_string(c.outcome))}};
    if (!c.cause.empty()) j["cause"] = c.cause;
    clips_json.push_back(std::move(j));
  }
  return {{"counts", counts}, {"clips", std::move(clips_json)}};
}

namespace {

struct ClipWork {
  std::optional<ReasoningAnnotation> annotation;
  ClipOutcome outcome = ClipOutcome::FAILED;
  std::string cause;
};

ClipWork process_clip(const MediaClip& clip, const Backends& backends, const CurationConfig& config) {
  ClipWork w;
  std::vector<ModalityEvidence> evidence;
  try {
    evidence = annotate_clip(clip, backends, config);
  } catch (const Error& e) {
    w.cause = e.what();
    return w;
  }
  const auto verdict = check_consistency(evidence, *backends.judge, clip.clip_id, config.prompt_templates());
  if (!verdict.consistent) {
    w.outcome = ClipOutcome::DISCARDED;
    w.cause = verdict.reason;
    return w;
  }
  ReasoningAnnotation a;
  try {
    a = synthesize_annotation(clip, evidence, *backends.judge, config.prompt_templates());
  } catch (const Error& e) {
    w.outcome = ClipOutcome::SYNTHESIS_FAILED;
    w.cause = e.what();
    return w;
  }
  try {
    score_alignment(a, clip.ground_truth_label, *backends.judge, config.prompt_templates());
  } catch (const Error& e) {
    w.outcome = ClipOutcome::UNSCORED;
    w.cause = e.what();
    return w;
  }
  w.outcome = ClipOutcome::SRE;  // provisional; final placement happens after filtering
  w.annotation = std::move(a);
  return w;
}

}  // namespace

CurationResult run_curation(const std::vector<MediaClip>& clips, const Backends& backends,
                            const CurationConfig& config, const std::vector<std::string>& backend_ids) {
  config.validate();
  {
    std::set<std::string> ids;
    for (const auto& c : clips) {
      if (!ids.insert(c.clip_id).second) throw ValidationError("clip_id", "duplicate clip_id '" + c.clip_id + "'");
    }
  }

  std::vector<ClipWork> results(clips.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < clips.size(); i = next++) {
      try {
        results[i] = process_clip(clips[i], backends, config);
      } catch (const std::exception& e) {
        results[i] = ClipWork{std::nullopt, ClipOutcome::FAILED, e.what()};
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(config.workers, static_cast<int>(clips.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  CurationResult out;
  for (const auto& w : results) {
    if (w.annotation) out.scored.push_back(*w.annotation);
  }
  std::sort(out.scored.begin(), out.scored.end(),
            [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
  const Provenance provenance = make_provenance(config, backend_ids);
  out.sre = filter_sre(out.scored, config, provenance);
  out.hre = sample_hre(out.scored, out.sre, config, provenance);

  std::set<std::string> in_sre, in_hre;
  for (const auto& r : out.sre.records) in_sre.insert(r.clip_id);
  for (const auto& r : out.hre.records) in_hre.insert(r.clip_id);

  for (std::size_t i = 0; i < clips.size(); ++i) {
    ClipReport c{clips[i].clip_id, results[i].outcome, results[i].cause};
    if (results[i].annotation) {
      const auto& a = *results[i].annotation;
      if (in_sre.count(a.clip_id)) {
        c.outcome = ClipOutcome::SRE;
      } else if (in_hre.count(a.clip_id)) {
        c.outcome = ClipOutcome::HRE;
      } else if (config.excluded_sources.count(a.source_dataset)) {
        c.outcome = ClipOutcome::FILTERED_SOURCE;
        c.cause = "excluded source " + std::string(to_string(a.source_dataset));
      } else {
        c.outcome = ClipOutcome::FILTERED_SCORE;
        c.cause = "score " + std::to_string(*a.alignment_score) + " below " + std::to_string(config.score_threshold);
      }
    }
    out.report.clips.push_back(std::move(c));
  }
  std::sort(out.report.clips.begin(), out.report.clips.end(),
            [](const auto& a, const auto& b) { return a.clip_id < b.clip_id; });
  out.report.counts["total"] = static_cast<std::int64_t>(clips.size());
  for (auto o : {ClipOutcome::SRE, ClipOutcome::HRE, ClipOutcome::FILTERED_SCORE, ClipOutcome::FILTERED_SOURCE,
                 ClipOutcome::UNSCORED, ClipOutcome::DISCARDED, ClipOutcome::SYNTHESIS_FAILED, ClipOutcome::FAILED}) {
    out.report.counts[std::string(to_string(o))] = 0;
  }
  for (const auto& c : out.report.clips) ++out.report.counts[std::string(to_string(c.outcome))];
  return out;
}

}  // namespace omni
