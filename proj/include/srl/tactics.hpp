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
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "srl/clustering.hpp"
#include "srl/sessions.hpp"

namespace srl::tactics {

// A named tactic with codes whose proportions identify it. Negative weights
// mark codes that argue against the name.
struct CatalogEntry {
  std::string code;
  std::string description;
  std::vector<std::pair<std::string, double>> signature;
};

struct TacticCatalog {
  std::vector<CatalogEntry> entries;

  static TacticCatalog default_catalog();
  static TacticCatalog from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
  std::size_t index_of(const std::string& code) const;
};

struct Tactic {
  std::size_t id = 0;
  std::string code;  // short display name
  std::string description;
  std::size_t session_count = 0;
  std::vector<double> event_proportions;  // registry order
  std::size_t medoid_session = 0;
};

struct TacticDetection {
  std::vector<std::string> event_codes;
  std::vector<Tactic> tactics;
  // Tactic id per input vector, in input order.
  std::vector<std::size_t> session_tactics;
  std::vector<std::size_t> session_ids;
  double objective = 0.0;
};

constexpr std::size_t kDefaultTacticCount = 12;

TacticDetection detect_tactics(const std::vector<sessions::SessionFrequencyVector>& vectors,
                               const std::vector<std::string>& event_codes,
                               const clustering::ClusteringConfig& config,
                               const TacticCatalog& catalog = TacticCatalog::default_catalog());

// Builds tactics from fixed labels (cluster index per vector); ordering and
// naming follow detect_tactics.
TacticDetection tactics_from_labels(const std::vector<sessions::SessionFrequencyVector>& vectors,
                                    const std::vector<std::string>& event_codes,
                                    const std::vector<std::size_t>& labels,
                                    const std::vector<std::size_t>& medoids,
                                    const TacticCatalog& catalog = TacticCatalog::default_catalog());

// Catalog names when the counts agree, otherwise names from dominant codes.
void assign_names(std::vector<Tactic>& tactics, const std::vector<std::string>& event_codes,
                  const TacticCatalog& catalog);

std::vector<std::pair<std::string, double>> top_codes(const Tactic& tactic,
                                                      const std::vector<std::string>& event_codes,
                                                      std::size_t count = 5);

// Columns: code, N, description, example codes.
std::string tactic_report_csv(const std::vector<Tactic>& tactics, const std::vector<std::string>& event_codes,
                              std::size_t top = 5);
std::string tactic_report_html(const std::vector<Tactic>& tactics, const std::vector<std::string>& event_codes,
                               std::size_t top = 5);

// Full per-tactic proportion table, one row per tactic and one column per code.
std::string proportions_csv(const std::vector<Tactic>& tactics, const std::vector<std::string>& event_codes);

// session_id,tactic_id,tactic_code
std::string session_tactics_csv(const TacticDetection& detection);

struct SessionTactic {
  std::size_t session_id = 0;
  std::size_t tactic_id = 0;
  std::string tactic_code;
};
std::vector<SessionTactic> parse_session_tactics_csv(std::string_view text);

nlohmann::json tactics_to_json(const TacticDetection& detection);
TacticDetection tactics_from_json(const nlohmann::json& doc);

}  // namespace srl::tactics
