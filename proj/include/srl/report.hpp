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

#include <filesystem>
#include <string>
#include <vector>

namespace srl::report {

// Artifact names shared by the stage commands and the report emitter.
namespace artifact {
inline constexpr const char* kTrace = "trace.log";
inline constexpr const char* kIngestStats = "ingest_stats.json";
inline constexpr const char* kSessions = "sessions.csv";
inline constexpr const char* kVectors = "session_vectors.csv";
inline constexpr const char* kSessionStats = "sessionize_stats.json";
inline constexpr const char* kTactics = "tactics.json";
inline constexpr const char* kSessionTactics = "session_tactics.csv";
inline constexpr const char* kTacticTable = "tactic_table.csv";
inline constexpr const char* kTacticProportions = "tactic_proportions.csv";
inline constexpr const char* kTacticCvi = "tactic_cvi.csv";
inline constexpr const char* kSequences = "sequences.csv";
inline constexpr const char* kRiskModel = "risk_model.json";
inline constexpr const char* kRiskScores = "risk_scores.csv";
inline constexpr const char* kWaterfall = "waterfall.csv";
inline constexpr const char* kStrategyTypes = "strategy_types.csv";
inline constexpr const char* kStrategyTypeSummary = "strategy_type_summary.csv";
inline constexpr const char* kStrategyTypeTactics = "strategy_type_tactics.csv";
inline constexpr const char* kStrategyCvi = "strategy_cvi.csv";
inline constexpr const char* kStrategyNotes = "strategy_notes.csv";
inline constexpr const char* kProfiles = "profiles.csv";
inline constexpr const char* kProfileMembers = "profile_members.csv";
inline constexpr const char* kProfileSummary = "profile_summary.csv";
inline constexpr const char* kProfileThemes = "profile_themes.csv";
inline constexpr const char* kProfileCvi = "profile_cvi.csv";
inline constexpr const char* kDendrogramSvg = "dendrogram.svg";
inline constexpr const char* kDendrogramDot = "dendrogram.dot";
inline constexpr const char* kDendrogramJson = "dendrogram.json";
inline constexpr const char* kComparisons = "comparisons.csv";
inline constexpr const char* kRunSummary = "run_summary.csv";
inline constexpr const char* kGraphs = "graphs";
inline constexpr const char* kReport = "report";

std::string type_graph_stem(std::size_t type_id);        // graphs/type_01
std::string profile_graph_stem(std::size_t cluster);     // graphs/profile_1
std::string strategy_fomm_path(const std::string& student, int week);  // graphs/fomm/<student>_w01.dot
}  // namespace artifact

struct ReportOptions {
  std::string title = "Learning strategy report";
};

// Renders the static bundle from the CSV, DOT and SVG artifacts in `work_dir`.
// Every artifact a page draws from is copied into the bundle, and every number on a
// page is the verbatim text of a cell in one of those copies. Returns the written
// files relative to `out_dir`, sorted.
std::vector<std::string> emit_report(const std::filesystem::path& work_dir, const std::filesystem::path& out_dir,
                                     const ReportOptions& options = {});

struct LinkIssue {
  std::string page;
  std::string target;
};

// Relative href/src references in the HTML files under `bundle_dir` that do not
// resolve to an existing file inside the bundle.
std::vector<LinkIssue> check_links(const std::filesystem::path& bundle_dir);

}  // namespace srl::report
