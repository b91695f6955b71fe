/*
 * Copyright 2026 The srltrace Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "srl/common.hpp"
#include "srl/ingest.hpp"

namespace srl::risk {

enum class TaskCategory { kIntro, kBasic, kCore, kBonus, kGuru, kSupplementary };
std::string to_string(TaskCategory c);
TaskCategory parse_category(std::string_view text);

struct Task {
  std::string id;
  int week = 1;
  TaskCategory category = TaskCategory::kBasic;
  double points = 1.0;
};

struct CourseSpec {
  ingest::CourseCalendar calendar = ingest::CourseCalendar::weekly(std::chrono::sys_days{}, 1);
  std::vector<Task> tasks;

  int week_count() const { return calendar.week_count(); }
  // Submissions strictly before this instant count toward week `week`.
  Timestamp deadline(int week) const { return calendar.week_end(week); }
  const Task* find(std::string_view id) const;
  void validate() const;

  static CourseSpec from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct SubmissionRecord {
  Timestamp timestamp{};
  std::string student;
  int week = 1;
  std::string task_id;
  TaskCategory category = TaskCategory::kBasic;
  bool correct = false;
};

// CSV `timestamp,student,week,task_id,category,correct`.
std::vector<SubmissionRecord> parse_submissions_csv(std::string_view text);
std::string submissions_csv(const std::vector<SubmissionRecord>& records);

struct GradeRecord {
  std::string student;
  double task_pct_before = 0.0;
  double task_pct_after = 0.0;
  double exam_pct = 0.0;
  int grade = 0;
};

// CSV `student,task_pct_before,task_pct_after,exam_pct,grade`.
std::vector<GradeRecord> parse_grades_csv(std::string_view text);
std::string grades_csv(const std::vector<GradeRecord>& records);

constexpr std::size_t kFeatureCount = 5;
constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{
    "core_completion", "basic_completion", "weekly_points", "log_submissions", "correct_ratio"};

struct WeeklyFeatureVector {
  std::array<double, kFeatureCount> values{};
};

// Submissions of one student; only those before the week's deadline count.
WeeklyFeatureVector extract_features(std::span<const SubmissionRecord> submissions, int week, const CourseSpec& spec);

struct TrainingExample {
  std::string student;
  int week = 0;
  WeeklyFeatureVector features;
  bool dropped = false;
  double weight = 1.0;
};

// One example per (graded student, week); label dropped iff final grade is 0.
std::vector<TrainingExample> build_training_set(const std::vector<SubmissionRecord>& submissions,
                                                const std::vector<GradeRecord>& grades, const CourseSpec& spec);

struct TrainConfig {
  double lambda = 1e-3;
  double tol = 1e-8;
  std::size_t max_iter = 10000;
  std::uint64_t seed = 42;
};

struct WeekModel {
  int week = 0;
  std::array<double, kFeatureCount> weights{};
  double intercept = 0.0;
  std::array<double, kFeatureCount> means{};
  std::size_t iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  double training_auc = 0.0;
  std::size_t examples = 0;
  std::vector<double> objective_trace;  // not persisted

  // Logit at the feature means.
  double baseline() const;
};

struct RiskModel {
  std::vector<WeekModel> weeks;
  TrainConfig config;
  std::string label_definition = "dropped = final grade 0";

  const WeekModel& week(int week_index) const;
  nlohmann::json to_json() const;
  static RiskModel from_json(const nlohmann::json& doc);
};

// Regularized logistic fit for one week's slice.
WeekModel train_week(std::span<const TrainingExample> examples, int week, const TrainConfig& config);
RiskModel train(const std::vector<TrainingExample>& history, const TrainConfig& config);

double sigmoid(double z);
double predict_week(const RiskModel& model, const WeeklyFeatureVector& features, int week_index);

struct Explanation {
  int week = 0;
  double baseline = 0.0;
  std::array<double, kFeatureCount> contributions{};
  std::array<double, kFeatureCount> features{};
  double logit = 0.0;
  double probability = 0.0;
  // Feature indices by descending |contribution|.
  std::array<std::size_t, kFeatureCount> order{};
};

// Exact Shapley values of a linear logit with absent features imputed by their means.
std::vector<double> linear_shapley(std::span<const double> weights, std::span<const double> means,
                                   std::span<const double> x);

Explanation explain(const RiskModel& model, const WeeklyFeatureVector& features, int week_index);
nlohmann::json explanation_to_json(const Explanation& e);
std::string waterfall_svg(const Explanation& e);

// Area under the ROC curve with ties counted half.
double auc(std::span<const double> scores, const std::vector<bool>& positive);

struct RiskScore {
  std::string student;
  int week = 0;
  double p_drop = 0.0;
  WeeklyFeatureVector features;
};

std::vector<RiskScore> score_cohort(const RiskModel& model, const std::vector<SubmissionRecord>& submissions,
                                    const std::vector<std::string>& students, const CourseSpec& spec);
// CSV `student,week,p_drop,<features>`.
std::string risk_scores_csv(const std::vector<RiskScore>& scores);
std::vector<RiskScore> parse_risk_scores_csv(std::string_view text);

}  // namespace srl::risk
