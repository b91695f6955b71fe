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
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "srl/common.hpp"
#include "srl/ingest.hpp"
#include "srl/profiling.hpp"
#include "srl/risk.hpp"
#include "srl/sessions.hpp"
#include "srl/strategies.hpp"

namespace srl::synth {

using Weights = std::vector<std::pair<std::string, double>>;

// Event-code distribution of one planted tactic.
struct TacticArchetype {
  std::string code;
  Weights events;
  int min_events = 8;
  int max_events = 24;
};

// Per-category probabilities that a task of the current week gets solved.
using SolveRates = std::array<double, 6>;  // indexed by risk::TaskCategory

// Markov chain over tactic archetypes plus the submission behaviour of a
// week spent with this strategy.
struct StrategyTemplate {
  std::string name;
  strategies::Risk risk = strategies::Risk::kLow;
  Weights initial;
  std::vector<std::pair<std::string, Weights>> transitions;
  int min_sessions = 9;
  int max_sessions = 15;
  SolveRates solve{};
  double attempt_rate = 0.3;  // unsolved task still gets a wrong attempt
};

struct ProfileArchetype {
  std::string name;
  std::size_t count = 0;
  Weights mixture;  // strategy template per week
  // hazard[w - 1]: probability that week w is the first inactive week.
  std::vector<double> hazard;
  Weights pre_dropout;  // template mixture for the final active weeks
  int pre_dropout_weeks = 0;
  bool late_submissions = false;  // every submission arrives after the course
  double exam_mean = 70;
  double exam_sd = 10;
  double answer_rate = 0.5;
  Weights themes;  // independent mention probability per theme
  std::array<double, 3> opinion{1.0 / 3, 1.0 / 3, 1.0 / 3};  // negative, neutral, positive
  bool outlier = false;
};

struct TaskLayout {
  risk::TaskCategory category = risk::TaskCategory::kBasic;
  int count = 1;
  double points = 1;
};

struct ArchetypeSpec {
  std::uint64_t seed = 42;
  int weeks = 11;
  std::chrono::sys_days first_week_start{};
  int utc_offset_minutes = 0;
  std::vector<TaskLayout> tasks;
  std::vector<TacticArchetype> tactics;
  std::vector<StrategyTemplate> templates;
  std::vector<ProfileArchetype> profiles;
  Millis intra_gap_min = std::chrono::seconds{10};
  Millis intra_gap_max = std::chrono::minutes{10};
  Millis inter_gap_min = std::chrono::minutes{40};
  Millis inter_gap_max = std::chrono::hours{8};
  double noise_actions_per_week = 1.0;  // course-irrelevant raw log lines
  double pass_floor = 0.4;              // share of task points every passing student reaches

  std::size_t student_count() const;
  std::optional<std::size_t> tactic_index(const std::string& code) const;
  std::optional<std::size_t> template_index(const std::string& name) const;
  // Throws ValidationError for unnormalized distributions, unknown
  // references or codes the rule table cannot produce.
  void validate(const ingest::EventCodeRegistry& registry = ingest::EventCodeRegistry::default_registry(),
                const ingest::RuleTable& rules = ingest::RuleTable::default_rules()) const;

  static ArchetypeSpec default_spec();
  static ArchetypeSpec from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

// Training-history variant of `spec`: a different seed and no outlier
// profiles (their students move to the largest profile), so the dropout
// label is separable from task features.
ArchetypeSpec history_spec(const ArchetypeSpec& spec, std::uint64_t seed);

struct PlantedStudent {
  std::string student;
  std::size_t profile = 0;
  std::optional<int> dropout_week;  // first inactive week
};

struct PlantedWeek {
  std::string student;
  int week = 0;
  std::size_t strategy = 0;  // template index
  strategies::Risk risk = strategies::Risk::kLow;
  std::vector<std::size_t> tactics;
};

struct PlantedSession {
  std::string student;
  int week = 0;
  Timestamp start{};
  Timestamp end{};
  std::size_t tactic = 0;
  std::size_t n_events = 0;
};

struct GroundTruth {
  std::vector<std::string> tactic_codes;
  std::vector<std::string> strategy_names;
  std::vector<strategies::Risk> strategy_risks;
  std::vector<std::string> profile_names;
  std::vector<bool> profile_outlier;
  std::vector<PlantedStudent> students;  // sorted by student id
  std::vector<PlantedWeek> weeks;        // sorted by (student, week)
  std::vector<PlantedSession> sessions;  // sorted by (student, start)

  nlohmann::json to_json() const;
  static GroundTruth from_json(const nlohmann::json& doc);
};

struct Cohort {
  ArchetypeSpec spec;
  std::string raw_log;
  std::size_t noise_lines = 0;
  risk::CourseSpec course;
  std::vector<risk::SubmissionRecord> submissions;
  std::vector<risk::GradeRecord> grades;
  std::vector<profiling::ThemeCode> themes;
  std::map<std::string, profiling::Opinion> opinions;
  GroundTruth truth;

  std::vector<std::string> students() const;
};

Cohort generate(const ArchetypeSpec& spec, const ingest::RuleTable& rules = ingest::RuleTable::default_rules());

// File name -> content for every artifact of a cohort.
std::vector<std::pair<std::string, std::string>> cohort_files(const Cohort& cohort);

struct RecoveryScores {
  double tactic = 0;
  double strategy = 0;
  double strategy_low = 0;   // within planted low-risk weeks
  double strategy_high = 0;  // within planted high-risk weeks
  double profile = 0;
  double profile_archetypes = 0;  // students of non-outlier profiles only
};

// Recovered labels keyed like the ground truth: sessions by (student, start),
// weekly strategies by (student, week), profiles by student. Any key set that
// differs from the planted one raises ValidationError.
struct RecoveredLabels {
  std::vector<std::pair<std::pair<std::string, Timestamp>, std::size_t>> sessions;
  std::vector<std::pair<std::pair<std::string, int>, std::size_t>> strategies;
  std::vector<std::pair<std::string, std::size_t>> profiles;
};
RecoveryScores score_recovery(const GroundTruth& truth, const RecoveredLabels& recovered);

}  // namespace srl::synth
