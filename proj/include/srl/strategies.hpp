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
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "srl/clustering.hpp"
#include "srl/common.hpp"

namespace srl::strategies {

struct LabeledSession {
  std::size_t session_id = 0;
  std::string student;
  int week = 0;
  Timestamp start{};
  std::size_t tactic = 0;
};

struct WeeklyStrategy {
  std::string student;
  int week = 0;
  std::vector<std::size_t> tactics;  // time ordered
  std::vector<std::size_t> session_ids;
  std::optional<double> p_drop;
};

// Groups sessions by (student, week), each ordered by start time.
std::vector<WeeklyStrategy> weekly_sequences(std::vector<LabeledSession> sessions);

// (T+1) x (T+1) matrix: row 0 is START and row 1+t is tactic t; column t is
// tactic t and column T is END.
class TransitionMatrix {
 public:
  TransitionMatrix() = default;
  explicit TransitionMatrix(std::size_t tactic_count)
      : t_(tactic_count), v_((tactic_count + 1) * (tactic_count + 1), 0.0) {}

  std::size_t tactic_count() const { return t_; }
  std::size_t dim() const { return t_ + 1; }
  double& operator()(std::size_t row, std::size_t col) { return v_[row * (t_ + 1) + col]; }
  double operator()(std::size_t row, std::size_t col) const { return v_[row * (t_ + 1) + col]; }
  double row_sum(std::size_t row) const;
  const std::vector<double>& values() const { return v_; }

  static std::size_t start_row() { return 0; }
  static std::size_t tactic_row(std::size_t t) { return t + 1; }
  std::size_t end_col() const { return t_; }

 private:
  std::size_t t_ = 0;
  std::vector<double> v_;
};

struct Fomm {
  TransitionMatrix counts;
  TransitionMatrix probabilities;  // rows normalized; absent rows all zero
};

Fomm fomm_from_sequence(const std::vector<std::size_t>& sequence, std::size_t tactic_count);
// Pooled bigram counts over several sequences.
Fomm fomm_from_sequences(const std::vector<const std::vector<std::size_t>*>& sequences, std::size_t tactic_count);

std::vector<double> flatten(const TransitionMatrix& m);
TransitionMatrix unflatten(const std::vector<double>& values, std::size_t tactic_count);
std::vector<double> tactic_frequencies(const std::vector<std::size_t>& sequence, std::size_t tactic_count);

enum class FeatureMode { kTransitions, kTacticFrequencies };
FeatureMode parse_feature_mode(std::string_view text);
std::string to_string(FeatureMode mode);
std::vector<double> strategy_features(const WeeklyStrategy& s, std::size_t tactic_count, FeatureMode mode);

enum class Risk { kLow, kHigh };
std::string to_string(Risk risk);
Risk parse_risk(std::string_view text);

constexpr double kRiskThreshold = 0.5;

struct RiskPartition {
  std::vector<std::size_t> low;  // indices into the strategy list
  std::vector<std::size_t> high;
};

RiskPartition partition_by_risk(const std::vector<WeeklyStrategy>& strategies, double threshold = kRiskThreshold);

struct StrategyTypeInfo {
  std::string name;
  Risk risk = Risk::kLow;
  std::string description;
  std::vector<std::pair<std::string, double>> signature;  // tactic code -> weight
};

struct StrategyCatalog {
  std::vector<StrategyTypeInfo> types;

  static StrategyCatalog default_catalog();
  static StrategyCatalog from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
  std::vector<const StrategyTypeInfo*> of_risk(Risk risk) const;
};

struct StrategyTypeAssignment {
  std::size_t strategy = 0;  // index into the strategy list
  Risk risk = Risk::kLow;
  std::size_t cluster_index = 0;  // within the partition
  std::size_t type_id = 0;        // low types first, then high
  std::string display_name;
  double mean_p_drop = 0.0;
};

struct StrategyTypeSummary {
  std::size_t type_id = 0;
  Risk risk = Risk::kLow;
  std::string name;
  std::string description;
  std::size_t count = 0;
  double mean_p_drop = 0.0;
  std::vector<double> mean_tactic_frequencies;
};

struct PartitionClustering {
  std::vector<StrategyTypeAssignment> assignments;  // same order as the partition indices
  std::vector<StrategyTypeSummary> types;
  std::optional<clustering::GmmResult> model;
};

// EM over one risk partition. `type_offset` is added to cluster indices to
// form global type ids; `tactic_codes` are used to match catalog names.
PartitionClustering cluster_strategy_types(const std::vector<WeeklyStrategy>& strategies,
                                           const std::vector<std::size_t>& partition, Risk risk,
                                           const clustering::ClusteringConfig& config, std::size_t tactic_count,
                                           FeatureMode mode, const std::vector<std::string>& tactic_codes,
                                           const StrategyCatalog& catalog, std::size_t type_offset = 0);

struct HeuristicEdge {
  std::size_t from = 0;  // state index: 0 START, 1+t tactic, T+1 END
  std::size_t to = 0;
  double dependency = 0.0;
  double frequency = 0.0;  // bigram count
};

struct HeuristicNet {
  std::size_t tactic_count = 0;
  std::vector<double> node_frequency;  // per state
  std::vector<HeuristicEdge> edges;
  double dependency_threshold = 0.9;
  double frequency_threshold = 0.05;
  double total_transitions = 0.0;
};

constexpr double kDefaultDependencyThreshold = 0.9;
constexpr double kDefaultFrequencyThreshold = 0.05;

double dependency_measure(double ab, double ba);
double self_loop_dependency(double aa);

HeuristicNet heuristic_net(const std::vector<const std::vector<std::size_t>*>& sequences, std::size_t tactic_count,
                           double dependency_threshold = kDefaultDependencyThreshold,
                           double frequency_threshold = kDefaultFrequencyThreshold);

std::string state_name(std::size_t state, const std::vector<std::string>& tactic_codes);
std::string fomm_to_dot(const TransitionMatrix& probabilities, const std::vector<std::string>& tactic_codes,
                        const std::string& title = "fomm");
std::string heuristic_net_to_dot(const HeuristicNet& net, const std::vector<std::string>& tactic_codes,
                                 const std::string& title = "heuristic_net");

// student,week,risk,type_id,type_name,p_drop
std::string strategy_types_csv(const std::vector<WeeklyStrategy>& strategies,
                               const std::vector<StrategyTypeAssignment>& assignments);

struct StrategyTypeRow {
  std::string student;
  int week = 0;
  Risk risk = Risk::kLow;
  std::size_t type_id = 0;
  std::string type_name;
  double p_drop = 0.0;
};
std::vector<StrategyTypeRow> parse_strategy_types_csv(std::string_view text);

// student,week,session_ids,tactics (space separated)
std::string sequences_csv(const std::vector<WeeklyStrategy>& strategies);
std::vector<WeeklyStrategy> parse_sequences_csv(std::string_view text);

}  // namespace srl::strategies
