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
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "srl/clustering.hpp"
#include "srl/risk.hpp"
#include "srl/strategies.hpp"

namespace srl::profiling {

// ---------------------------------------------------------------- testing

enum class TestMode { kAnalytic, kPermutation };
std::string to_string(TestMode mode);

struct BMTestResult {
  double statistic = 0.0;  // positive when x tends to be larger than y
  std::optional<double> df;
  double p_value = 1.0;
  double effect = 0.5;  // P(X < Y) + P(X = Y) / 2
  TestMode mode = TestMode::kAnalytic;
  std::size_t resamples = 0;  // permutations evaluated (0 for analytic)
  bool exact = false;         // permutation distribution fully enumerated
  bool fallback = false;      // analytic requested but variance degenerate
  std::size_t n_x = 0;
  std::size_t n_y = 0;
};

struct BMOptions {
  TestMode mode = TestMode::kAnalytic;
  std::size_t resamples = 10000;
  std::uint64_t seed = 42;
  // Enumerate all relabelings when their count is at most `resamples`.
  bool allow_exact = true;
};

// Studentized statistic and Satterthwaite df for fixed samples; df is empty
// when the variance estimate is zero.
struct BMStatistic {
  double statistic = 0.0;
  std::optional<double> df;
  double effect = 0.5;
};
BMStatistic brunner_munzel_statistic(std::span<const double> x, std::span<const double> y);

BMTestResult brunner_munzel(std::span<const double> x, std::span<const double> y, const BMOptions& options = {});

// "p̂*(434.690) = −3.351, p < .001, p̂″ = 0.589" or "permuted Brunner-Munzel, p = .713".
std::string format_result(const BMTestResult& r, bool always_effect = false);
std::string format_p(double p);

// ------------------------------------------------------------ self-reports

enum class Opinion { kNegative = 0, kNeutral = 1, kPositive = 2 };
std::string to_string(Opinion o);
std::optional<Opinion> parse_opinion(std::string_view text);  // "absent"/"" -> nullopt

struct ThemeCode {
  std::string student;
  std::string theme;
};

struct SelfReports {
  std::vector<ThemeCode> themes;
  std::map<std::string, Opinion> opinions;

  std::set<std::string> answerers() const;
};

std::vector<ThemeCode> parse_themes_csv(std::string_view text);
std::string themes_csv(const std::vector<ThemeCode>& themes);
std::map<std::string, Opinion> parse_opinions_csv(std::string_view text);
std::string opinions_csv(const std::map<std::string, Opinion>& opinions);

struct ThemeInfo {
  std::string name;
  std::string description;
};
// Theme vocabulary with descriptions, in descending reported frequency.
const std::vector<ThemeInfo>& theme_vocabulary();

// ---------------------------------------------------------------- profiles

struct StudentProfile {
  std::string student;
  std::vector<double> values;  // per strategy type
  std::size_t weeks_observed = 0;
};

// One profile per student with at least one typed week, sorted by student.
std::vector<StudentProfile> build_profiles(const std::vector<strategies::StrategyTypeRow>& rows, std::size_t type_count);
std::string profiles_csv(const std::vector<StudentProfile>& profiles, const std::vector<std::string>& type_names);

struct ClusterSummary {
  std::size_t n_students = 0;
  std::optional<double> median_task_pct;
  std::optional<double> median_exam_pct;
  std::optional<double> median_grade;
  std::optional<double> mean_p_drop;
  std::optional<double> median_p_drop;
  std::size_t answerers = 0;
  std::vector<std::pair<std::string, std::size_t>> majority_themes;
  std::map<std::string, std::size_t> opinions;  // negative/neutral/positive/absent
};

struct ProfileCluster {
  std::size_t cluster_index = 0;
  std::string display_name;
  std::vector<std::string> members;
  std::vector<double> mean_profile;
  ClusterSummary summary;
};

struct ProfileCatalogEntry {
  std::string name;
  std::string description;
  // Keys are strategy-type names or the pseudo features @high_risk,
  // @singleton and @dropout.
  std::vector<std::pair<std::string, double>> signature;
};

struct ProfileCatalog {
  std::vector<ProfileCatalogEntry> entries;
  static ProfileCatalog default_catalog();
  static ProfileCatalog from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct CohortData {
  std::map<std::string, risk::GradeRecord> grades;
  std::vector<strategies::StrategyTypeRow> strategies;
  SelfReports reports;
};

struct ProfileClustering {
  std::vector<ProfileCluster> clusters;
  clustering::MergeTree tree;
  std::vector<std::size_t> labels;  // per profile
};

std::size_t constexpr kDefaultProfileClusters = 5;

ProfileClustering cluster_profiles(const std::vector<StudentProfile>& profiles, std::size_t k,
                                   const std::vector<std::string>& type_names,
                                   const std::vector<strategies::Risk>& type_risks, const CohortData& data,
                                   const ProfileCatalog& catalog = ProfileCatalog::default_catalog());

ClusterSummary summarize(const std::vector<std::string>& members, const CohortData& data);

// ------------------------------------------------------------ comparisons

enum class Variable { kGrade, kPDrop, kOpinion };
std::string to_string(Variable v);

struct Comparison {
  std::string cluster;
  Variable variable = Variable::kGrade;
  bool computable = false;
  std::string reason;
  BMTestResult result;
  std::string formatted;
};

struct CompareOptions {
  BMOptions test;
  // Permutation mode whenever either side has at most this many observations.
  std::size_t permutation_below = 5;
  bool include_dropouts = true;
};

Comparison compare_cluster(const std::string& name, const std::set<std::string>& members, Variable variable,
                           const CohortData& data, const CompareOptions& options = {});

std::string comparisons_csv(const std::vector<Comparison>& comparisons);

}  // namespace srl::profiling
