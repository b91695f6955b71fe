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

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "srl/clustering.hpp"
#include "srl/common.hpp"
#include "srl/ingest.hpp"
#include "srl/profiling.hpp"
#include "srl/risk.hpp"
#include "srl/sessions.hpp"
#include "srl/strategies.hpp"
#include "srl/tactics.hpp"

namespace srl::pipeline {

struct PipelineConfig {
  Millis gap_cutoff = sessions::kDefaultGapCutoff;
  Millis merge_window = std::chrono::seconds{60};
  std::size_t k_sess = tactics::kDefaultTacticCount;
  std::size_t k_pass = 3;
  std::size_t k_drop = 9;
  std::size_t k_student = profiling::kDefaultProfileClusters;
  double risk_threshold = strategies::kRiskThreshold;
  std::uint64_t seed = 42;
  strategies::FeatureMode feature_mode = strategies::FeatureMode::kTransitions;
  std::size_t kmedoids_restarts = 5;
  std::size_t em_restarts = 50;
  bool include_dropouts = true;
  std::size_t resamples = 10000;
  std::size_t permutation_below = 5;

  void validate() const;
  // Unknown keys are rejected so typos do not silently fall back to defaults.
  static PipelineConfig from_json(const nlohmann::json& doc);
  static PipelineConfig from_json(const nlohmann::json& doc, PipelineConfig base);
  nlohmann::json to_json() const;
};

struct SessionizeResult {
  std::vector<sessions::Session> sessions;  // filtered, ids 0..n-1
  std::vector<sessions::SessionRecord> records;
  std::vector<sessions::SessionFrequencyVector> vectors;
  std::size_t dropped_single_event = 0;
};

SessionizeResult sessionize(const std::vector<ingest::TraceEvent>& events, const ingest::CourseCalendar& calendar,
                            const ingest::EventCodeRegistry& registry, Millis gap_cutoff);

tactics::TacticDetection detect(const SessionizeResult& sessions, const ingest::EventCodeRegistry& registry,
                                const PipelineConfig& config,
                                const tactics::TacticCatalog& catalog = tactics::TacticCatalog::default_catalog());

std::vector<strategies::WeeklyStrategy> weekly_strategies(const std::vector<sessions::SessionRecord>& records,
                                                          const std::vector<std::size_t>& session_tactics);

// Sets p_drop of every strategy from the score of its (student, week).
// Throws ValidationError when a strategy has no score.
void attach_scores(std::vector<strategies::WeeklyStrategy>& strategies, const std::vector<risk::RiskScore>& scores);

struct StrategyTyping {
  strategies::RiskPartition partition;
  strategies::PartitionClustering low;
  strategies::PartitionClustering high;
  std::vector<strategies::StrategyTypeAssignment> assignments;  // by strategy index
  std::vector<strategies::StrategyTypeRow> rows;                // by strategy index
  std::vector<std::string> type_names;                         // by type id
  std::vector<strategies::Risk> type_risks;
  std::vector<std::string> notes;
};

StrategyTyping type_strategies(const std::vector<strategies::WeeklyStrategy>& strategies, std::size_t tactic_count,
                               const std::vector<std::string>& tactic_codes, const PipelineConfig& config,
                               const strategies::StrategyCatalog& catalog = strategies::StrategyCatalog::default_catalog());

struct ProfileStage {
  std::vector<profiling::StudentProfile> profiles;
  profiling::ProfileClustering clustering;
  std::vector<profiling::Comparison> comparisons;
};

ProfileStage profile_students(const StrategyTyping& typing, const profiling::CohortData& data,
                              const PipelineConfig& config,
                              const profiling::ProfileCatalog& catalog = profiling::ProfileCatalog::default_catalog());

struct PipelineInputs {
  std::string raw_log;
  risk::CourseSpec course;
  std::vector<risk::SubmissionRecord> submissions;
  std::vector<risk::GradeRecord> grades;
  profiling::SelfReports reports;
  risk::RiskModel model;
};

struct PipelineResult {
  ingest::IngestResult ingest;
  SessionizeResult sessions;
  tactics::TacticDetection tactics;
  std::vector<strategies::WeeklyStrategy> strategies;
  std::vector<risk::RiskScore> scores;
  StrategyTyping typing;
  ProfileStage profiles;
};

// All stages in order, in memory.
PipelineResult run(const PipelineInputs& inputs, const PipelineConfig& config,
                   const ingest::RuleTable& rules = ingest::RuleTable::default_rules(),
                   const ingest::EventCodeRegistry& registry = ingest::EventCodeRegistry::default_registry());

}  // namespace srl::pipeline
