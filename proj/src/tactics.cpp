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

#include "srl/tactics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <fmt/core.h>

#include "srl/common.hpp"
#include "srl/io.hpp"

namespace srl::tactics {
namespace {

using Signature = std::vector<std::pair<std::string, double>>;

double signature_score(const Signature& sig, const std::vector<double>& proportions,
                       const std::map<std::string, std::size_t>& index) {
  double score = 0;
  for (const auto& [code, weight] : sig) {
    auto it = index.find(code);
    if (it != index.end()) score += weight * proportions[it->second];
  }
  return score;
}

}  // namespace

TacticCatalog TacticCatalog::default_catalog() {
  TacticCatalog c;
  c.entries = {
      {"F_CourseMat_Examples", "Focusing on course materials and examples in the materials",
       {{"answer:materials-book-example", 1}, {"answer-wrong:materials-book-example", 1}, {"read:materials-book", 1}}},
      {"F_Lec_Engaged", "Focusing on the lecture and lecture materials",
       {{"read:lecture-cur-wk", 1},
        {"answer:lecture-cur-wk-example", 1},
        {"answer-wrong:lecture-cur-wk-example", 1},
        {"join-lecture:lecture-cur-wk", 1},
        {"leave-lecture:lecture-cur-wk", 1},
        {"watch-video:lecture-cur-wk", -1}}},
      {"F_Lec_Video", "Focusing on lecture videos",
       {{"watch-video:lecture-cur-wk", 1.5}, {"watch-video:lecture-prev-wk", 1}, {"read:lecture-cur-wk", 0.5}}},
      {"F_CurTasks_Intro", "Focusing on current week's introductory tasks",
       {{"answer:tasks-cur-intro", 1}, {"answer-wrong:tasks-cur-intro", 1}}},
      {"F_CurTasks_Core_Attempt", "Focusing on current week's core tasks, submitting incomplete solutions",
       {{"answer-wrong:tasks-cur-core", 1.5}, {"answer:tasks-cur-core", -0.5}, {"read:tasks-cur", 0.25}}},
      {"F_CurTasks_Core_Correct", "Focusing on current week's core tasks, submitting correct solutions",
       {{"answer:tasks-cur-core", 1.5}, {"answer-wrong:tasks-cur-core", -0.5}, {"read:tasks-cur", 0.25}}},
      {"F_CurTasks_Basic_Attempt", "Focusing on current week's basic tasks, submitting incomplete solutions",
       {{"answer-wrong:tasks-cur-basic", 1.5}, {"answer:tasks-cur-basic", -0.5}, {"read:tasks-cur", 0.25}}},
      {"F_CurTasks_Basic_Correct", "Focusing on current week's basic tasks, submitting correct solutions",
       {{"answer:tasks-cur-basic", 1.5}, {"answer-wrong:tasks-cur-basic", -0.5}, {"read:tasks-cur", 0.25}}},
      {"F_CurTasks_Extra", "Focusing on current week's extra tasks (bonus, guru) or supplementary tasks",
       {{"read:tasks-extra", 1},
        {"read:tasks-supp", 1},
        {"answer:tasks-cur-bonus", 1},
        {"answer-wrong:tasks-cur-bonus", 1},
        {"answer:tasks-cur-guru", 1},
        {"answer-wrong:tasks-cur-guru", 1},
        {"answer:tasks-cur-supplementary", 1},
        {"answer-wrong:tasks-cur-supplementary", 1},
        {"answer:tasks-extra-supplementary", 1},
        {"answer-wrong:tasks-extra-supplementary", 1},
        {"answer:tasks-supp-supplementary", 1}}},
      {"TA_Sess", "Attending one-to-one session with TAs", {{"session-start:None", 1}, {"session-end:None", 1}}},
      {"F_PrevTasks_Basic", "Focusing on reviewing last week's tasks, focusing on fixing basic answers",
       {{"answer:tasks-prev-basic", 1}, {"answer-wrong:tasks-prev-basic", 1}, {"answer:tasks-prev-core", -0.5}}},
      {"F_PrevTasks_Deep", "Focusing on reviewing last week's tasks, reviewing and fixing multiple tasks",
       {{"answer:tasks-prev-core", 1},
        {"answer:tasks-prev-intro", 1},
        {"answer-wrong:tasks-prev-core", 0.5},
        {"check-model-answer:tasks-prev-core", 0.5},
        {"check-model-answer:tasks-prev-intro", 0.5},
        {"answer-wrong:tasks-prev-basic", -0.5}}},
  };
  return c;
}

TacticCatalog TacticCatalog::from_json(const nlohmann::json& doc) {
  TacticCatalog c;
  try {
    for (const auto& e : doc.at("tactics")) {
      CatalogEntry entry;
      entry.code = e.at("code").get<std::string>();
      entry.description = e.value("description", "");
      for (const auto& [code, weight] : e.at("signature").items()) entry.signature.emplace_back(code, weight.get<double>());
      c.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(fmt::format("invalid tactic catalog: {}", ex.what()));
  }
  return c;
}

nlohmann::json TacticCatalog::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json sig = nlohmann::json::object();
    for (const auto& [code, weight] : e.signature) sig[code] = weight;
    arr.push_back({{"code", e.code}, {"description", e.description}, {"signature", sig}});
  }
  return {{"tactics", arr}};
}

std::size_t TacticCatalog::index_of(const std::string& code) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].code == code) return i;
  }
  throw ValidationError(fmt::format("unknown tactic code '{}'", code));
}

std::vector<std::pair<std::string, double>> top_codes(const Tactic& tactic,
                                                      const std::vector<std::string>& event_codes,
                                                      std::size_t count) {
  std::vector<std::size_t> order(tactic.event_proportions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return tactic.event_proportions[a] > tactic.event_proportions[b];
  });
  std::vector<std::pair<std::string, double>> out;
  for (auto i : order) {
    if (out.size() == count || !(tactic.event_proportions[i] > 0)) break;
    out.emplace_back(event_codes.at(i), tactic.event_proportions[i]);
  }
  return out;
}

void assign_names(std::vector<Tactic>& tactics, const std::vector<std::string>& event_codes,
                  const TacticCatalog& catalog) {
  if (tactics.size() != catalog.entries.size() || tactics.empty()) {
    for (auto& t : tactics) {
      const auto top = top_codes(t, event_codes, 1);
      t.code = fmt::format("T{}", t.id + 1);
      t.description = top.empty() ? "empty" : fmt::format("Dominated by {}", top.front().first);
    }
    return;
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < event_codes.size(); ++i) index[event_codes[i]] = i;
  const std::size_t k = tactics.size();
  std::vector<std::vector<double>> score(k, std::vector<double>(k));
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t e = 0; e < k; ++e)
      score[t][e] = signature_score(catalog.entries[e].signature, tactics[t].event_proportions, index);
  // Greedy: repeatedly fix the highest-scoring unassigned pair.
  std::vector<bool> used_t(k, false), used_e(k, false);
  for (std::size_t step = 0; step < k; ++step) {
    std::size_t bt = 0, be = 0;
    double best = -1e300;
    for (std::size_t t = 0; t < k; ++t) {
      if (used_t[t]) continue;
      for (std::size_t e = 0; e < k; ++e) {
        if (!used_e[e] && score[t][e] > best) {
          best = score[t][e];
          bt = t;
          be = e;
        }
      }
    }
    used_t[bt] = used_e[be] = true;
    tactics[bt].code = catalog.entries[be].code;
    tactics[bt].description = catalog.entries[be].description;
  }
}

TacticDetection tactics_from_labels(const std::vector<sessions::SessionFrequencyVector>& vectors,
                                    const std::vector<std::string>& event_codes,
                                    const std::vector<std::size_t>& labels,
                                    const std::vector<std::size_t>& medoids, const TacticCatalog& catalog) {
  if (labels.size() != vectors.size()) throw ValidationError("label count does not match session count");
  const std::size_t k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<Tactic> clusters(k);
  for (std::size_t c = 0; c < k; ++c) {
    clusters[c].event_proportions.assign(event_codes.size(), 0.0);
    clusters[c].medoid_session = c < medoids.size() ? vectors.at(medoids[c]).session_id : 0;
  }
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].values.size() != event_codes.size()) {
      throw ValidationError(fmt::format("session {} vector has {} entries, expected {}", vectors[i].session_id,
                                        vectors[i].values.size(), event_codes.size()));
    }
    auto& t = clusters[labels[i]];
    ++t.session_count;
    for (std::size_t c = 0; c < event_codes.size(); ++c) t.event_proportions[c] += vectors[i].values[c];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  order.erase(std::remove_if(order.begin(), order.end(), [&](std::size_t c) { return clusters[c].session_count == 0; }),
              order.end());
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return clusters[a].session_count > clusters[b].session_count; });
  std::vector<std::size_t> new_id(k, 0);
  TacticDetection out;
  out.event_codes = event_codes;
  for (std::size_t r = 0; r < order.size(); ++r) {
    Tactic t = std::move(clusters[order[r]]);
    t.id = r;
    for (auto& p : t.event_proportions) p /= static_cast<double>(t.session_count);
    new_id[order[r]] = r;
    out.tactics.push_back(std::move(t));
  }
  assign_names(out.tactics, event_codes, catalog);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    out.session_tactics.push_back(new_id[labels[i]]);
    out.session_ids.push_back(vectors[i].session_id);
  }
  return out;
}

TacticDetection detect_tactics(const std::vector<sessions::SessionFrequencyVector>& vectors,
                               const std::vector<std::string>& event_codes,
                               const clustering::ClusteringConfig& config, const TacticCatalog& catalog) {
  clustering::DataMatrix data(vectors.size(), event_codes.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].values.size() != event_codes.size()) {
      throw ValidationError(fmt::format("session {} vector has {} entries, expected {}", vectors[i].session_id,
                                        vectors[i].values.size(), event_codes.size()));
    }
    std::copy(vectors[i].values.begin(), vectors[i].values.end(), data.row(i).begin());
  }
  const auto assignment = clustering::kmedoids_l1(data, config);
  auto out = tactics_from_labels(vectors, event_codes, assignment.labels, assignment.medoids, catalog);
  out.objective = assignment.objective;
  return out;
}

std::string tactic_report_csv(const std::vector<Tactic>& tactics, const std::vector<std::string>& event_codes,
                              std::size_t top) {
  io::CsvWriter w({"code", "N", "description", "example codes"});
  for (const auto& t : tactics) {
    std::string examples;
    for (const auto& [code, p] : top_codes(t, event_codes, top)) {
      if (!examples.empty()) examples += ' ';
      examples += fmt::format("{} ({:.1f}%)", code, 100 * p);
    }
    w.add_row({t.code, std::to_string(t.session_count), t.description, examples});
  }
  return w.str();
}

std::string tactic_report_html(const std::vector<Tactic>& tactics, const std::vector<std::string>& event_codes,
                               std::size_t top) {
  std::string out =
      "<table class=\"tactics\">\n<thead><tr><th>Code</th><th>N</th><th>Description</th>"
      "<th>Example codes</th></tr></thead>\n<tbody>\n";
  for (const auto& t : tactics) {
    std::string examples;
    for (const auto& [code, p] : top_codes(t, event_codes, top)) {
      examples += fmt::format("<code>{}</code> {:.1f}%<br>", io::html_escape(code), 100 * p);
    }
    out += fmt::format("<tr><td><code>{}</code></td><td>{}</td><td>{}</td><td>{}</td></tr>\n",
                       io::html_escape(t.code), t.session_count, io::html_escape(t.description), examples);
  }
  out += "</tbody>\n</table>\n";
  return out;
}

std::string proportions_csv(const std::vector<Tactic>& tactics, const std::vector<std::string>& event_codes) {
  std::vector<std::string> header{"tactic"};
  header.insert(header.end(), event_codes.begin(), event_codes.end());
  io::CsvWriter w(header);
  for (const auto& t : tactics) {
    std::vector<std::string> row{t.code};
    for (double p : t.event_proportions) row.push_back(io::format_double(p));
    w.add_row(row);
  }
  return w.str();
}

std::string session_tactics_csv(const TacticDetection& detection) {
  io::CsvWriter w({"session_id", "tactic_id", "tactic_code"});
  for (std::size_t i = 0; i < detection.session_ids.size(); ++i) {
    const auto id = detection.session_tactics[i];
    w.add_row({std::to_string(detection.session_ids[i]), std::to_string(id), detection.tactics.at(id).code});
  }
  return w.str();
}

std::vector<SessionTactic> parse_session_tactics_csv(std::string_view text) {
  const auto table = io::CsvTable::parse(text);
  table.require_columns({"session_id", "tactic_id", "tactic_code"});
  std::vector<SessionTactic> out;
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    SessionTactic s;
    s.session_id = static_cast<std::size_t>(io::parse_int(table.at(r, "session_id")));
    s.tactic_id = static_cast<std::size_t>(io::parse_int(table.at(r, "tactic_id")));
    s.tactic_code = table.at(r, "tactic_code");
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json tactics_to_json(const TacticDetection& detection) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : detection.tactics) {
    arr.push_back({{"id", t.id},
                   {"code", t.code},
                   {"description", t.description},
                   {"session_count", t.session_count},
                   {"medoid_session", t.medoid_session},
                   {"event_proportions", t.event_proportions}});
  }
  return {{"event_codes", detection.event_codes}, {"objective", detection.objective}, {"tactics", arr}};
}

TacticDetection tactics_from_json(const nlohmann::json& doc) {
  TacticDetection out;
  try {
    out.event_codes = doc.at("event_codes").get<std::vector<std::string>>();
    out.objective = doc.value("objective", 0.0);
    for (const auto& e : doc.at("tactics")) {
      Tactic t;
      t.id = e.at("id").get<std::size_t>();
      t.code = e.at("code").get<std::string>();
      t.description = e.value("description", "");
      t.session_count = e.at("session_count").get<std::size_t>();
      t.medoid_session = e.value("medoid_session", std::size_t{0});
      t.event_proportions = e.at("event_proportions").get<std::vector<double>>();
      out.tactics.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(fmt::format("invalid tactics document: {}", ex.what()));
  }
  return out;
}

}  // namespace srl::tactics
