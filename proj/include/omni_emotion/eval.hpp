// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "omni_emotion/backends.hpp"
#include "omni_emotion/corpus.hpp"
#include "omni_emotion/templates.hpp"

namespace omni {

enum class UnknownLabelPolicy { SINGLETON, ERROR };

/// Label -> dense group id over a declared universe.
class GroupMap {
 public:
  GroupMap() = default;
  /// Labels are normalized; a label listed in two groups is an error.
  static GroupMap from_groups(const std::vector<std::vector<std::string>>& groups,
                              UnknownLabelPolicy policy = UnknownLabelPolicy::SINGLETON);
  static GroupMap from_json(const json& j, UnknownLabelPolicy policy = UnknownLabelPolicy::SINGLETON);
  static GroupMap load(const std::filesystem::path& path, UnknownLabelPolicy policy = UnknownLabelPolicy::SINGLETON);
  /// The synonym table shipped with the library.
  static const GroupMap& builtin();

  /// Known label's group; unknown labels raise ValidationError.
  int group_of(const std::string& label) const;
  bool contains(const std::string& label) const { return ids_.count(label) > 0; }
  int num_groups() const noexcept { return num_groups_; }
  UnknownLabelPolicy policy() const noexcept { return policy_; }
  const std::map<std::string, int>& labels() const noexcept { return ids_; }

  /// Copy where every unknown label becomes a fresh singleton group (sorted
  /// order), or ValidationError under UnknownLabelPolicy::ERROR.
  GroupMap extended(const std::vector<std::string>& labels) const;

  json to_json() const;
  bool operator==(const GroupMap&) const = default;

 private:
  std::map<std::string, int> ids_;
  int num_groups_ = 0;
  UnknownLabelPolicy policy_ = UnknownLabelPolicy::SINGLETON;
};

/// Asks the judge to group the label universe and caches the result at
/// cache_path (keyed by the universe and template hash). Judge failures raise.
GroupMap build_group_map_with_judge(const std::vector<std::string>& labels, Judge& judge,
                                    const TemplateSet& templates,
                                    const std::optional<std::filesystem::path>& cache_path = std::nullopt);

struct OvScores {
  double precision = 0.0;
  double recall = 0.0;
  double avg = 0.0;
};

/// Grouped set precision/recall; truth must be non-empty.
OvScores ov_metrics(const LabelSet& truth, const LabelSet& prediction, const GroupMap& map);

struct ClassificationScores {
  double uar = 0.0;
  double war = 0.0;
  std::map<std::string, double> per_class_recall;  // classes present in the ground truth
  int out_of_list = 0;                             // predictions outside class_list
};

ClassificationScores classification_metrics(const std::vector<std::string>& predictions,
                                             const std::vector<std::string>& ground_truths,
                                             const std::vector<std::string>& class_list);

struct OverlapScores {
  int clue_overlap = 0;
  int label_overlap = 0;
  std::string judge_rationale;
};

OverlapScores overlap_scores(const std::string& id, const std::string& predicted_description,
                             const std::string& reference_description, Judge& judge,
                             const TemplateSet& templates = TemplateSet::builtin());

// ---------------------------------------------------------------------------
// Files and reports
// ---------------------------------------------------------------------------

struct PredictionRecord {
  std::string id;
  std::optional<std::vector<std::string>> labels;
  std::optional<std::string> label;
  std::optional<std::string> description;
};

/// JSONL of {id, labels?, label?, description?}; errors carry the line number.
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

enum class EvalTask { EMER_OV, EMOTION_CLS, REASONING_OVERLAP };
std::string_view to_string(EvalTask t);
EvalTask parse_eval_task(std::string_view name);  // emer-ov, cls, overlap

struct SampleResult {
  std::string id;
  json inputs;
  json outputs;
  std::map<std::string, double> scores;
  bool flagged = false;
  std::string error;
};

struct EvalReport {
  EvalTask task = EvalTask::EMER_OV;
  std::map<std::string, double> metrics;
  std::vector<SampleResult> per_sample;
  json info = json::object();

  void validate() const;
  json to_json() const;
  std::string to_csv() const;
  void write(const std::filesystem::path& json_path, const std::filesystem::path& csv_path) const;
};

/// Corpus metrics as percentages. A reference without a prediction counts as
/// an empty prediction.
EvalReport evaluate_open_vocab(const std::vector<PredictionRecord>& predictions,
                               const std::vector<PredictionRecord>& references, const GroupMap& map);

EvalReport evaluate_classification(const std::vector<PredictionRecord>& predictions,
                                   const std::vector<PredictionRecord>& references,
                                   const std::vector<std::string>& class_list);

/// Samples whose judging fails are flagged, excluded from the means and
/// counted in info.flagged.
EvalReport evaluate_overlap(const std::vector<PredictionRecord>& predictions,
                            const std::vector<PredictionRecord>& references, Judge& judge,
                            const TemplateSet& templates = TemplateSet::builtin(), int workers = 4);

}  // namespace omni
