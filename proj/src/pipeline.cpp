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

#include "srl/pipeline.hpp"

#include <set>

#include <fmt/core.h>

namespace srl::pipeline {

void PipelineConfig::validate() const {
  if (gap_cutoff <= Millis{0}) throw ValidationError("gap cutoff must be positive");
  if (merge_window < Millis{0}) throw ValidationError("merge window must be non-negative");
  if (k_sess == 0 || k_pass == 0 || k_drop == 0 || k_student == 0) throw ValidationError("cluster counts must be positive");
  if (!(risk_threshold >= 0 && risk_threshold <= 1)) throw ValidationError("risk threshold must lie in [0, 1]");
  if (kmedoids_restarts == 0 || em_restarts == 0) throw ValidationError("restarts must be positive");
  if (resamples == 0) throw ValidationError("resamples must be positive");
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& doc) { return from_json(doc, PipelineConfig{}); }

PipelineConfig PipelineConfig::from_json(const nlohmann::json& doc, PipelineConfig c) {
  if (!doc.is_object()) throw ValidationError("pipeline config must be a JSON object");
  static const std::set<std::string> known{"gap_cutoff_minutes", "merge_window_seconds", "k_sess",        "k_pass",
                                           "k_drop",             "k_student",            "risk_threshold", "seed",
                                           "feature_mode",       "kmedoids_restarts",    "em_restarts",    "include_dropouts",
                                           "resamples",          "permutation_below"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw ValidationError(fmt::format("unknown pipeline config key '{}'", key));
  }
  try {
    if (doc.contains("gap_cutoff_minutes")) {
      c.gap_cutoff = std::chrono::duration_cast<Millis>(
          std::chrono::duration<double, std::ratio<60>>(doc.at("gap_cutoff_minutes").get<double>()));
    }
    if (doc.contains("merge_window_seconds")) {
      c.merge_window = std::chrono::duration_cast<Millis>(std::chrono::duration<double>(doc.at("merge_window_seconds").get<double>()));
    }
    c.k_sess = doc.value("k_sess", c.k_sess);
    c.k_pass = doc.value("k_pass", c.k_pass);
    c.k_drop = doc.value("k_drop", c.k_drop);
    c.k_student = doc.value("k_student", c.k_student);
    c.risk_threshold = doc.value("risk_threshold", c.risk_threshold);
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("feature_mode")) c.feature_mode = strategies::parse_feature_mode(doc.at("feature_mode").get<std::string>());
    c.kmedoids_restarts = doc.value("kmedoids_restarts", c.kmedoids_restarts);
    c.em_restarts = doc.value("em_restarts", c.em_restarts);
    c.include_dropouts = doc.value("include_dropouts", c.include_dropouts);
    c.resamples = doc.value("resamples", c.resamples);
    c.permutation_below = doc.value("permutation_below", c.permutation_below);
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(fmt::format("invalid pipeline config: {}", ex.what()));
  }
  c.validate();
  return c;
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"gap_cutoff_minutes", std::chrono::duration<double, std::ratio<60>>(gap_cutoff).count()},
          {"merge_window_seconds", std::chrono::duration<double>(merge_window).count()},
          {"k_sess", k_sess},
          {"k_pass", k_pass},
          {"k_drop", k_drop},
          {"k_student", k_student},
          {"risk_threshold", risk_threshold},
          {"seed", seed},
          {"feature_mode", strategies::to_string(feature_mode)},
          {"kmedoids_restarts", kmedoids_restarts},
          {"em_restarts", em_restarts},
          {"include_dropouts", include_dropouts},
          {"resamples", resamples},
          {"permutation_below", permutation_below}};
}

SessionizeResult sessionize(const std::vector<ingest::TraceEvent>& events, const ingest::CourseCalendar& calendar,
                            const ingest::EventCodeRegistry& registry, Millis gap_cutoff) {
  SessionizeResult r;
  auto all = sessions::split_all(events, gap_cutoff, calendar);
  const std::size_t before = all.size();
  r.sessions = sessions::filter_sessions(std::move(all));
  r.dropped_single_event = before - r.sessions.size();
  for (const auto& s : r.sessions) {
    r.records.push_back(sessions::record_of(s));
    r.vectors.push_back(sessions::frequency_vector(s, registry));
  }
  return r;
}

tactics::TacticDetection detect(const SessionizeResult& sessions, const ingest::EventCodeRegistry& registry,
                                const PipelineConfig& config, const tactics::TacticCatalog& catalog) {
  auto cfg = clustering::ClusteringConfig::kmedoids(config.k_sess, config.seed);
  cfg.restarts = config.kmedoids_restarts;
  return tactics::detect_tactics(sessions.vectors, registry.codes(), cfg, catalog);
}

std::vector<strategies::WeeklyStrategy> weekly_strategies(const std::vector<sessions::SessionRecord>& records,
                                                          const std::vector<std::size_t>& session_tactics) {
  if (records.size() != session_tactics.size()) {
    throw ValidationError(fmt::format("{} sessions but {} tactic labels", records.size(), session_tactics.size()));
  }
  std::vector<strategies::LabeledSession> labeled;
  labeled.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    labeled.push_back({records[i].id, records[i].student, records[i].week_index, records[i].start, session_tactics[i]});
  }
  return strategies::weekly_sequences(std::move(labeled));
}

void attach_scores(std::vector<strategies::WeeklyStrategy>& strategies, const std::vector<risk::RiskScore>& scores) {
  std::map<std::pair<std::string, int>, double> by_key;
  for (const auto& s : scores) by_key[{s.student, s.week}] = s.p_drop;
  for (auto& s : strategies) {
    auto it = by_key.find({s.student, s.week});
    if (it == by_key.end()) {
      throw ValidationError(fmt::format("no dropout score for student {} in week {}", s.student, s.week));
    }
    s.p_drop = it->second;
  }
}

StrategyTyping type_strategies(const std::vector<strategies::WeeklyStrategy>& strats, std::size_t tactic_count,
                               const std::vector<std::string>& tactic_codes, const PipelineConfig& config,
                               const strategies::StrategyCatalog& catalog) {
  using strategies::Risk;
  StrategyTyping t;
  t.partition = strategies::partition_by_risk(strats, config.risk_threshold);
  t.assignments.resize(strats.size());
  auto run_partition = [&](const std::vector<std::size_t>& members, Risk risk, std::size_t k, std::size_t offset) {
    strategies::PartitionClustering pc;
    if (members.empty()) {
      t.notes.push_back(fmt::format("no {}-risk strategies; partition skipped", strategies::to_string(risk)));
      return pc;
    }
    std::size_t k_eff = std::min(k, members.size());
    if (k_eff < k) {
      t.notes.push_back(fmt::format("{}-risk partition has {} strategies; using k = {} instead of {}",
                                    strategies::to_string(risk), members.size(), k_eff, k));
    }
    auto cfg = clustering::ClusteringConfig::em(k_eff, config.seed);
    cfg.restarts = config.em_restarts;
    pc = strategies::cluster_strategy_types(strats, members, risk, cfg, tactic_count, config.feature_mode, tactic_codes,
                                            catalog, offset);
    for (const auto& a : pc.assignments) t.assignments[a.strategy] = a;
    return pc;
  };
  t.low = run_partition(t.partition.low, Risk::kLow, config.k_pass, 0);
  t.high = run_partition(t.partition.high, Risk::kHigh, config.k_drop, config.k_pass);
  t.type_names.resize(config.k_pass + config.k_drop);
  t.type_risks.resize(config.k_pass + config.k_drop, Risk::kLow);
  for (std::size_t i = 0; i < t.type_names.size(); ++i) {
    t.type_names[i] = fmt::format("Type {}", i + 1);
    t.type_risks[i] = i < config.k_pass ? Risk::kLow : Risk::kHigh;
  }
  for (const auto* pc : {&t.low, &t.high}) {
    for (const auto& s : pc->types) {
      if (s.type_id < t.type_names.size()) t.type_names[s.type_id] = s.name;
    }
  }
  const auto csv = strategies::strategy_types_csv(strats, t.assignments);
  t.rows = strategies::parse_strategy_types_csv(csv);
  return t;
}

ProfileStage profile_students(const StrategyTyping& typing, const profiling::CohortData& data,
                              const PipelineConfig& config, const profiling::ProfileCatalog& catalog) {
  ProfileStage p;
  p.profiles = profiling::build_profiles(typing.rows, typing.type_names.size());
  p.clustering =
      profiling::cluster_profiles(p.profiles, config.k_student, typing.type_names, typing.type_risks, data, catalog);
  profiling::CompareOptions opts;
  opts.test.resamples = config.resamples;
  opts.test.seed = config.seed;
  opts.permutation_below = config.permutation_below;
  opts.include_dropouts = config.include_dropouts;
  for (const auto& c : p.clustering.clusters) {
    const std::set<std::string> members(c.members.begin(), c.members.end());
    for (auto v : {profiling::Variable::kGrade, profiling::Variable::kPDrop, profiling::Variable::kOpinion}) {
      p.comparisons.push_back(profiling::compare_cluster(c.display_name, members, v, data, opts));
    }
  }
  return p;
}

PipelineResult run(const PipelineInputs& in, const PipelineConfig& config, const ingest::RuleTable& rules,
                   const ingest::EventCodeRegistry& registry) {
  config.validate();
  PipelineResult r;
  r.ingest = ingest::ingest_raw_log(in.raw_log, rules, registry, in.course.calendar, config.merge_window);
  r.sessions = sessionize(r.ingest.events, in.course.calendar, registry, config.gap_cutoff);
  r.tactics = detect(r.sessions, registry, config);
  r.strategies = weekly_strategies(r.sessions.records, r.tactics.session_tactics);
  std::set<std::string> students;
  for (const auto& s : r.strategies) students.insert(s.student);
  r.scores = risk::score_cohort(in.model, in.submissions, {students.begin(), students.end()}, in.course);
  attach_scores(r.strategies, r.scores);
  std::vector<std::string> tactic_codes;
  for (const auto& t : r.tactics.tactics) tactic_codes.push_back(t.code);
  r.typing = type_strategies(r.strategies, r.tactics.tactics.size(), tactic_codes, config);
  profiling::CohortData data;
  for (const auto& g : in.grades) data.grades[g.student] = g;
  data.strategies = r.typing.rows;
  data.reports = in.reports;
  r.profiles = profile_students(r.typing, data, config);
  return r;
}

}  // namespace srl::pipeline
