// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "omni_emotion/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "omni_emotion/error.hpp"
#include "omni_emotion/log.hpp"
#include "omni_emotion/util.hpp"

namespace omni {

// ---------------------------------------------------------------------------
// GroupMap
// ---------------------------------------------------------------------------

GroupMap GroupMap::from_groups(const std::vector<std::vector<std::string>>& groups, UnknownLabelPolicy policy) {
  GroupMap m;
  m.policy_ = policy;
  for (const auto& g : groups) {
    const LabelSet labels = normalize_labels(g);
    if (labels.empty()) continue;
    for (const auto& l : labels) {
      if (!m.ids_.emplace(l, m.num_groups_).second) {
        throw ValidationError("groups", "label '" + l + "' appears in more than one group");
      }
    }
    ++m.num_groups_;
  }
  return m;
}

GroupMap GroupMap::from_json(const json& j, UnknownLabelPolicy policy) {
  try {
    return from_groups(j.at("groups").get<std::vector<std::vector<std::string>>>(), policy);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad group table: ") + e.what());
  }
}

GroupMap GroupMap::load(const std::filesystem::path& path, UnknownLabelPolicy policy) {
  try {
    return from_json(json::parse(read_file(path)), policy);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

const GroupMap& GroupMap::builtin() {
  static const GroupMap m = from_json(json::parse(embedded_resource("emotion_groups.json")));
  return m;
}

int GroupMap::group_of(const std::string& label) const {
  const auto it = ids_.find(label);
  if (it == ids_.end()) throw ValidationError("label", "'" + label + "' is not in the group map");
  return it->second;
}

GroupMap GroupMap::extended(const std::vector<std::string>& labels) const {
  GroupMap out = *this;
  for (const auto& l : normalize_labels(labels)) {
    if (out.ids_.count(l)) continue;
    if (policy_ == UnknownLabelPolicy::ERROR) throw ValidationError("label", "'" + l + "' is not in the group map");
    out.ids_.emplace(l, out.num_groups_++);
  }
  return out;
}

json GroupMap::to_json() const {
  std::vector<std::vector<std::string>> groups(static_cast<std::size_t>(num_groups_));
  for (const auto& [label, id] : ids_) groups[static_cast<std::size_t>(id)].push_back(label);
  return json{{"version", 1}, {"groups", groups}};
}

namespace {

std::vector<std::vector<std::string>> parse_grouping_reply(const std::string& text) {
  std::vector<std::vector<std::string>> groups;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (!starts_with_ci(t, "group:")) continue;
    std::vector<std::string> g;
    for (const auto& part : split(t.substr(6), ',')) {
      const std::string w = to_lower(trim(part));
      if (!w.empty()) g.push_back(w);
    }
    if (!g.empty()) groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace

GroupMap build_group_map_with_judge(const std::vector<std::string>& labels, Judge& judge,
                                    const TemplateSet& templates,
                                    const std::optional<std::filesystem::path>& cache_path) {
  const LabelSet universe = normalize_labels(labels);
  if (universe.empty()) throw PreconditionError("label universe is empty");
  const std::vector<std::string> words(universe.begin(), universe.end());
  const std::string key = to_hex(fnv1a64(join(words, "\n") + "\n" + templates.hash()));

  if (cache_path && std::filesystem::exists(*cache_path)) {
    const json cached = json::parse(read_file(*cache_path));
    if (cached.value("key", std::string()) == key) return GroupMap::from_json(cached);
    log_info("group map cache " + cache_path->string() + " is stale; rebuilding");
  }

  const std::string prompt =
      templates.render("label_grouping", {{"clip_id", "label-universe"}, {"labels", join(words, ", ")}});
  const JudgeResult reply = judge.judge(prompt, {});
  auto groups = parse_grouping_reply(reply.verdict_text);
  if (groups.empty()) throw ProtocolError(judge.id(), "grouping reply contains no 'Group:' lines");

  std::vector<std::vector<std::string>> kept;
  std::set<std::string> seen;
  for (auto& g : groups) {
    std::vector<std::string> in_universe;
    for (auto& w : g) {
      if (!universe.count(w)) {
        log_warning("judge grouped unknown label '" + w + "'; ignored");
        continue;
      }
      if (!seen.insert(w).second) throw ProtocolError(judge.id(), "label '" + w + "' placed in two groups");
      in_universe.push_back(w);
    }
    if (!in_universe.empty()) kept.push_back(std::move(in_universe));
  }
  for (const auto& w : words) {
    if (!seen.count(w)) kept.push_back({w});
  }
  GroupMap map = GroupMap::from_groups(kept);

  if (cache_path) {
    json j = map.to_json();
    j["key"] = key;
    j["judge"] = judge.id();
    j["template_hash"] = templates.hash();
    if (cache_path->has_parent_path()) std::filesystem::create_directories(cache_path->parent_path());
    write_file_atomic(*cache_path, j.dump(1) + "\n");
  }
  return map;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

OvScores ov_metrics(const LabelSet& truth, const LabelSet& prediction, const GroupMap& map) {
  const LabelSet y = normalize_labels({truth.begin(), truth.end()});
  const LabelSet y_hat = normalize_labels({prediction.begin(), prediction.end()});
  if (y.empty()) throw PreconditionError("ground-truth label set is empty");

  std::map<std::string, int> fresh;
  const auto group = [&](const std::string& l) {
    if (map.contains(l)) return map.group_of(l);
    if (map.policy() == UnknownLabelPolicy::ERROR) {
      throw ValidationError("label", "'" + l + "' is not in the group map");
    }
    return fresh.emplace(l, map.num_groups() + static_cast<int>(fresh.size())).first->second;
  };
  std::set<int> gy, gy_hat;
  for (const auto& l : y) gy.insert(group(l));
  for (const auto& l : y_hat) gy_hat.insert(group(l));
  std::size_t common = 0;
  for (int g : gy_hat) common += gy.count(g);

  OvScores s;
  s.precision = gy_hat.empty() ? 0.0 : static_cast<double>(common) / static_cast<double>(gy_hat.size());
  s.recall = static_cast<double>(common) / static_cast<double>(gy.size());
  s.avg = (s.precision + s.recall) / 2.0;
  return s;
}

ClassificationScores classification_metrics(const std::vector<std::string>& predictions,
                                             const std::vector<std::string>& ground_truths,
                                             const std::vector<std::string>& class_list) {
  if (predictions.size() != ground_truths.size()) {
    throw PreconditionError("predictions and ground truths differ in length");
  }
  if (ground_truths.empty()) throw PreconditionError("no samples to score");
  std::vector<std::string> classes;
  for (const auto& c : class_list) classes.push_back(to_lower(trim(c)));
  const std::set<std::string> class_set(classes.begin(), classes.end());

  std::map<std::string, std::int64_t> total, correct;
  std::int64_t hits = 0;
  ClassificationScores s;
  for (std::size_t i = 0; i < ground_truths.size(); ++i) {
    const std::string t = to_lower(trim(ground_truths[i]));
    const std::string p = to_lower(trim(predictions[i]));
    if (!class_set.count(t)) throw PreconditionError("ground truth '" + t + "' is not in the class list");
    if (!class_set.count(p)) {
      ++s.out_of_list;
      log_warning("prediction '" + p + "' is outside the class list; counted wrong");
    }
    ++total[t];
    if (p == t) {
      ++correct[t];
      ++hits;
    }
  }
  double sum = 0.0;
  for (const auto& c : class_set) {
    const auto it = total.find(c);
    if (it == total.end()) continue;
    const double r = static_cast<double>(correct[c]) / static_cast<double>(it->second);
    s.per_class_recall[c] = r;
    sum += r;
  }
  s.uar = sum / static_cast<double>(s.per_class_recall.size());
  s.war = static_cast<double>(hits) / static_cast<double>(ground_truths.size());
  return s;
}

OverlapScores overlap_scores(const std::string& id, const std::string& predicted_description,
                             const std::string& reference_description, Judge& judge, const TemplateSet& templates) {
  if (trim(predicted_description).empty()) throw PreconditionError("predicted description is empty");
  if (trim(reference_description).empty()) throw PreconditionError("reference description is empty");
  const std::map<std::string, std::string> vars = {
      {"clip_id", id}, {"reference", reference_description}, {"prediction", predicted_description}};
  const JudgeResult clue = judge.judge(templates.render("clue_overlap", vars), {}, true);
  const JudgeResult label = judge.judge(templates.render("label_overlap", vars), {}, true);
  OverlapScores s;
  s.clue_overlap = *clue.score;
  s.label_overlap = *label.score;
  s.judge_rationale = trim(clue.verdict_text) + "\n---\n" + trim(label.verdict_text);
  return s;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<PredictionRecord> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      if (!j.is_object()) throw FormatError("expected a JSON object");
      PredictionRecord r;
      r.id = j.at("id").get<std::string>();
      if (r.id.empty()) throw FormatError("id must be non-empty");
      if (!ids.insert(r.id).second) throw FormatError("duplicate id '" + r.id + "'");
      if (j.contains("labels") && !j.at("labels").is_null()) r.labels = j.at("labels").get<std::vector<std::string>>();
      if (j.contains("label") && !j.at("label").is_null()) r.label = j.at("label").get<std::string>();
      if (j.contains("description") && !j.at("description").is_null()) {
        r.description = j.at("description").get<std::string>();
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const FormatError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

std::string_view to_string(EvalTask t) {
  switch (t) {
    case EvalTask::EMER_OV: return "EMER_OV";
    case EvalTask::EMOTION_CLS: return "EMOTION_CLS";
    case EvalTask::REASONING_OVERLAP: return "REASONING_OVERLAP";
  }
  return "?";
}

EvalTask parse_eval_task(std::string_view name) {
  const std::string n = to_lower(name);
  if (n == "emer-ov" || n == "emer_ov") return EvalTask::EMER_OV;
  if (n == "cls" || n == "emotion_cls") return EvalTask::EMOTION_CLS;
  if (n == "overlap" || n == "reasoning_overlap") return EvalTask::REASONING_OVERLAP;
  throw UsageError("unknown eval task '" + std::string(name) + "' (expected emer-ov, cls or overlap)");
}

void EvalReport::validate() const {
  for (const auto& [name, v] : metrics) {
    if (!std::isfinite(v)) throw ValidationError("metrics", name + " is not finite");
  }
  std::set<std::string> ids;
  for (const auto& s : per_sample) {
    if (!ids.insert(s.id).second) throw ValidationError("per_sample", "duplicate id '" + s.id + "'");
  }
}

json EvalReport::to_json() const {
  json samples = json::array();
  for (const auto& s : per_sample) {
    json j{{"id", s.id}, {"inputs", s.inputs}, {"outputs", s.outputs}, {"scores", s.scores}};
    if (s.flagged) {
      j["flagged"] = true;
      j["error"] = s.error;
    }
    samples.push_back(std::move(j));
  }
  return json{{"task", to_string(task)}, {"metrics", metrics}, {"info", info}, {"per_sample", samples}};
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_score(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

}  // namespace

std::string EvalReport::to_csv() const {
  std::set<std::string> columns;
  for (const auto& s : per_sample) {
    for (const auto& [k, _] : s.scores) columns.insert(k);
  }
  std::ostringstream o;
  o << "id";
  for (const auto& c : columns) o << ',' << c;
  o << ",flagged\n";
  for (const auto& s : per_sample) {
    o << csv_field(s.id);
    for (const auto& c : columns) {
      o << ',';
      const auto it = s.scores.find(c);
      if (it != s.scores.end()) o << format_score(it->second);
    }
    o << ',' << (s.flagged ? "true" : "false") << '\n';
  }
  return o.str();
}

void EvalReport::write(const std::filesystem::path& json_path, const std::filesystem::path& csv_path) const {
  validate();
  for (const auto* p : {&json_path, &csv_path}) {
    if (p->has_parent_path()) std::filesystem::create_directories(p->parent_path());
  }
  write_file_atomic(json_path, to_json().dump(2) + "\n");
  write_file_atomic(csv_path, to_csv());
}

// ---------------------------------------------------------------------------
// Corpus evaluation
// ---------------------------------------------------------------------------

namespace {

std::map<std::string, const PredictionRecord*> index_by_id(const std::vector<PredictionRecord>& records) {
  std::map<std::string, const PredictionRecord*> out;
  for (const auto& r : records) {
    if (!out.emplace(r.id, &r).second) throw ValidationError("id", "duplicate id '" + r.id + "'");
  }
  return out;
}

void warn_unmatched(const std::vector<PredictionRecord>& predictions,
                    const std::map<std::string, const PredictionRecord*>& refs) {
  for (const auto& p : predictions) {
    if (!refs.count(p.id)) log_warning("prediction '" + p.id + "' has no reference; ignored");
  }
}

}  // namespace

EvalReport evaluate_open_vocab(const std::vector<PredictionRecord>& predictions,
                               const std::vector<PredictionRecord>& references, const GroupMap& map) {
  if (references.empty()) throw PreconditionError("no references to evaluate");
  const auto preds = index_by_id(predictions);
  warn_unmatched(predictions, index_by_id(references));
  EvalReport report;
  report.task = EvalTask::EMER_OV;
  double p_sum = 0.0, r_sum = 0.0;
  for (const auto& ref : references) {
    if (!ref.labels || ref.labels->empty()) {
      throw PreconditionError("reference '" + ref.id + "' has no labels");
    }
    const LabelSet y = normalize_labels(*ref.labels);
    LabelSet y_hat;
    const auto it = preds.find(ref.id);
    if (it != preds.end() && it->second->labels) y_hat = normalize_labels(*it->second->labels);
    const OvScores s = ov_metrics(y, y_hat, map);
    p_sum += s.precision;
    r_sum += s.recall;
    SampleResult sr;
    sr.id = ref.id;
    sr.inputs = json{{"truth", y}};
    sr.outputs = json{{"prediction", y_hat}};
    sr.scores = {{"precision", s.precision}, {"recall", s.recall}, {"avg", s.avg}};
    report.per_sample.push_back(std::move(sr));
  }
  const double n = static_cast<double>(references.size());
  const double precision = 100.0 * p_sum / n;
  const double recall = 100.0 * r_sum / n;
  report.metrics = {{"precision", precision}, {"recall", recall}, {"avg", (precision + recall) / 2.0}};
  report.info = json{{"samples", references.size()}, {"groups", map.num_groups()}};
  return report;
}

EvalReport evaluate_classification(const std::vector<PredictionRecord>& predictions,
                                   const std::vector<PredictionRecord>& references,
                                   const std::vector<std::string>& class_list) {
  if (references.empty()) throw PreconditionError("no references to evaluate");
  const auto preds = index_by_id(predictions);
  warn_unmatched(predictions, index_by_id(references));
  std::vector<std::string> p, t;
  EvalReport report;
  report.task = EvalTask::EMOTION_CLS;
  for (const auto& ref : references) {
    if (!ref.label) throw PreconditionError("reference '" + ref.id + "' has no label");
    const auto it = preds.find(ref.id);
    const std::string pred = (it != preds.end() && it->second->label) ? *it->second->label : std::string();
    t.push_back(*ref.label);
    p.push_back(pred);
    SampleResult sr;
    sr.id = ref.id;
    sr.inputs = json{{"truth", *ref.label}};
    sr.outputs = json{{"prediction", pred}};
    sr.scores = {{"correct", to_lower(trim(pred)) == to_lower(trim(*ref.label)) ? 1.0 : 0.0}};
    report.per_sample.push_back(std::move(sr));
  }
  const auto s = classification_metrics(p, t, class_list);
  report.metrics = {{"UAR", 100.0 * s.uar}, {"WAR", 100.0 * s.war}};
  report.info = json{{"samples", references.size()}, {"out_of_list", s.out_of_list},
                     {"per_class_recall", s.per_class_recall}};
  return report;
}

EvalReport evaluate_overlap(const std::vector<PredictionRecord>& predictions,
                            const std::vector<PredictionRecord>& references, Judge& judge,
                            const TemplateSet& templates, int workers) {
  if (references.empty()) throw PreconditionError("no references to evaluate");
  const auto preds = index_by_id(predictions);
  warn_unmatched(predictions, index_by_id(references));

  EvalReport report;
  report.task = EvalTask::REASONING_OVERLAP;
  report.per_sample.resize(references.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < references.size(); i = next++) {
      const auto& ref = references[i];
      SampleResult& sr = report.per_sample[i];
      sr.id = ref.id;
      const auto it = preds.find(ref.id);
      const std::string pred = (it != preds.end() && it->second->description) ? *it->second->description : "";
      sr.inputs = json{{"reference", ref.description.value_or("")}};
      sr.outputs = json{{"prediction", pred}};
      try {
        if (!ref.description) throw PreconditionError("reference '" + ref.id + "' has no description");
        const OverlapScores s = overlap_scores(ref.id, pred, *ref.description, judge, templates);
        sr.scores = {{"clue_overlap", s.clue_overlap}, {"label_overlap", s.label_overlap}};
        sr.outputs["judge_rationale"] = s.judge_rationale;
      } catch (const Error& e) {
        sr.flagged = true;
        sr.error = e.what();
        log_warning("overlap scoring for '" + ref.id + "' failed: " + e.what());
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(references.size())));
    for (int w = 0; w < n; ++w) pool.emplace_back(work);
  }

  double clue = 0.0, label = 0.0;
  int scored = 0, flagged = 0;
  for (const auto& sr : report.per_sample) {
    if (sr.flagged) {
      ++flagged;
      continue;
    }
    clue += sr.scores.at("clue_overlap");
    label += sr.scores.at("label_overlap");
    ++scored;
  }
  if (scored > 0) {
    report.metrics = {{"clue_overlap", clue / scored}, {"label_overlap", label / scored}};
  }
  report.info = json{{"samples", references.size()}, {"scored", scored}, {"flagged", flagged},
                     {"judge", judge.id()},          {"template_hash", templates.hash()}};
  return report;
}

}  // namespace omni
