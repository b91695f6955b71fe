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

#include "srl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/core.h>

#include "srl/clustering.hpp"
#include "srl/io.hpp"

namespace srl::synth {
namespace {

using namespace std::chrono_literals;
using risk::TaskCategory;
using strategies::Risk;

constexpr std::array<TaskCategory, 6> kCategories{TaskCategory::kIntro, TaskCategory::kBasic,
                                                  TaskCategory::kCore,  TaskCategory::kBonus,
                                                  TaskCategory::kGuru,  TaskCategory::kSupplementary};

Weights normalized(Weights w) {
  double total = 0;
  for (const auto& [k, v] : w) total += v;
  for (auto& [k, v] : w) v /= total;
  return w;
}

void check_distribution(const Weights& w, const std::string& what) {
  if (w.empty()) throw ValidationError(fmt::format("{}: empty distribution", what));
  double total = 0;
  for (const auto& [k, v] : w) {
    if (!(v >= 0) || !std::isfinite(v)) throw ValidationError(fmt::format("{}: weight of '{}' is invalid", what, k));
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw ValidationError(fmt::format("{}: probabilities sum to {} instead of 1", what, total));
  }
}

void check_probability(double p, const std::string& what) {
  if (!(p >= 0 && p <= 1)) throw ValidationError(fmt::format("{}: {} is not a probability", what, p));
}

std::size_t draw(Rng& rng, const Weights& w) {
  std::vector<double> p;
  p.reserve(w.size());
  for (const auto& [k, v] : w) p.push_back(v);
  return rng.categorical(p);
}

Millis uniform_millis(Rng& rng, Millis lo, Millis hi) {
  return Millis{rng.between(lo.count(), hi.count())};
}

// Template visiting `tactics` cyclically: mostly advance, sometimes repeat
// or jump.
StrategyTemplate chain(std::string name, Risk risk, std::vector<std::string> tactics, int min_sessions,
                       int max_sessions, SolveRates solve, double attempt_rate) {
  StrategyTemplate t;
  t.name = std::move(name);
  t.risk = risk;
  t.min_sessions = min_sessions;
  t.max_sessions = max_sessions;
  t.solve = solve;
  t.attempt_rate = attempt_rate;
  const std::size_t m = tactics.size();
  for (std::size_t i = 0; i < m; ++i) t.initial.emplace_back(tactics[i], i == 0 ? 0.7 : 0.3 / static_cast<double>(m - 1));
  if (m == 1) t.initial = {{tactics[0], 1.0}};
  for (std::size_t i = 0; i < m; ++i) {
    Weights row;
    for (std::size_t j = 0; j < m; ++j) {
      double w = 0;
      if (m == 1) {
        w = 1;
      } else if (j == (i + 1) % m) {
        w = 0.6;
      } else if (j == i) {
        w = 0.2;
      } else {
        w = 0.2 / static_cast<double>(m - 2);
      }
      if (m == 2 && j == i) w = 0.4;
      row.emplace_back(tactics[j], w);
    }
    t.transitions.emplace_back(tactics[i], normalized(std::move(row)));
  }
  t.initial = normalized(std::move(t.initial));
  return t;
}

nlohmann::json weights_json(const Weights& w) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [k, v] : w) arr.push_back({k, v});
  return arr;
}

Weights weights_from(const nlohmann::json& j) {
  Weights w;
  for (const auto& e : j) w.emplace_back(e.at(0).get<std::string>(), e.at(1).get<double>());
  return w;
}

std::string task_id(int week, TaskCategory c, int k) { return fmt::format("w{:02d}-{}-{}", week, risk::to_string(c), k); }

}  // namespace

// ----------------------------------------------------------------- spec

std::size_t ArchetypeSpec::student_count() const {
  std::size_t n = 0;
  for (const auto& p : profiles) n += p.count;
  return n;
}

std::optional<std::size_t> ArchetypeSpec::tactic_index(const std::string& code) const {
  for (std::size_t i = 0; i < tactics.size(); ++i)
    if (tactics[i].code == code) return i;
  return std::nullopt;
}

std::optional<std::size_t> ArchetypeSpec::template_index(const std::string& name) const {
  for (std::size_t i = 0; i < templates.size(); ++i)
    if (templates[i].name == name) return i;
  return std::nullopt;
}

void ArchetypeSpec::validate(const ingest::EventCodeRegistry& registry, const ingest::RuleTable& rules) const {
  if (weeks < 1) throw ValidationError("synthetic course needs at least one week");
  if (tasks.empty()) throw ValidationError("synthetic course needs at least one task layout");
  for (const auto& t : tasks) {
    if (t.count < 1 || !(t.points > 0)) throw ValidationError("task layout needs a positive count and points");
  }
  if (tactics.empty() || templates.empty() || profiles.empty()) {
    throw ValidationError("spec needs tactics, strategy templates and profiles");
  }
  if (student_count() == 0) throw ValidationError("spec generates no students");
  if (intra_gap_min <= 0ms || intra_gap_min > intra_gap_max || inter_gap_min > inter_gap_max ||
      intra_gap_max >= inter_gap_min) {
    throw ValidationError("session gap ranges must be positive, ordered and disjoint");
  }
  check_probability(pass_floor, "pass floor");
  if (noise_actions_per_week < 0) throw ValidationError("noise rate must be non-negative");
  std::set<std::string> seen;
  for (const auto& t : tactics) {
    if (!seen.insert(t.code).second) throw ValidationError(fmt::format("duplicate tactic '{}'", t.code));
    check_distribution(t.events, "tactic " + t.code);
    if (t.min_events < 2 || t.min_events > t.max_events) {
      throw ValidationError(fmt::format("tactic {}: session length range must start at 2 or more", t.code));
    }
    for (const auto& [code, w] : t.events) {
      if (!registry.contains(code)) throw ValidationError(fmt::format("tactic {}: unknown event code '{}'", t.code, code));
      (void)rules.example_action(code, 1);
    }
  }
  seen.clear();
  for (const auto& s : templates) {
    if (!seen.insert(s.name).second) throw ValidationError(fmt::format("duplicate strategy template '{}'", s.name));
    check_distribution(s.initial, "template " + s.name + " initial");
    for (const auto& [k, w] : s.initial) {
      if (!tactic_index(k)) throw ValidationError(fmt::format("template {}: unknown tactic '{}'", s.name, k));
    }
    for (const auto& [from, row] : s.transitions) {
      if (!tactic_index(from)) throw ValidationError(fmt::format("template {}: unknown tactic '{}'", s.name, from));
      check_distribution(row, "template " + s.name + " row " + from);
      for (const auto& [k, w] : row) {
        if (!tactic_index(k)) throw ValidationError(fmt::format("template {}: unknown tactic '{}'", s.name, k));
      }
    }
    if (s.min_sessions < 1 || s.min_sessions > s.max_sessions) {
      throw ValidationError(fmt::format("template {}: invalid session count range", s.name));
    }
    for (double p : s.solve) check_probability(p, "template " + s.name + " solve rate");
    check_probability(s.attempt_rate, "template " + s.name + " attempt rate");
  }
  for (const auto& p : profiles) {
    check_distribution(p.mixture, "profile " + p.name);
    for (const auto& [k, w] : p.mixture) {
      if (!template_index(k)) throw ValidationError(fmt::format("profile {}: unknown template '{}'", p.name, k));
    }
    if (p.pre_dropout_weeks > 0) {
      check_distribution(p.pre_dropout, "profile " + p.name + " pre-dropout");
      for (const auto& [k, w] : p.pre_dropout) {
        if (!template_index(k)) throw ValidationError(fmt::format("profile {}: unknown template '{}'", p.name, k));
      }
    }
    if (!p.hazard.empty()) {
      if (p.hazard.size() != static_cast<std::size_t>(weeks)) {
        throw ValidationError(fmt::format("profile {}: hazard needs one entry per week", p.name));
      }
      if (p.hazard[0] != 0) throw ValidationError(fmt::format("profile {}: week 1 hazard must be 0", p.name));
      for (double h : p.hazard) check_probability(h, "profile " + p.name + " hazard");
    }
    check_probability(p.answer_rate, "profile " + p.name + " answer rate");
    for (const auto& [k, w] : p.themes) check_probability(w, "profile " + p.name + " theme " + k);
    check_distribution({{"negative", p.opinion[0]}, {"neutral", p.opinion[1]}, {"positive", p.opinion[2]}},
                       "profile " + p.name + " opinion");
  }
}

ArchetypeSpec ArchetypeSpec::default_spec() {
  ArchetypeSpec s;
  s.first_week_start = parse_date("2023-09-04");
  s.tasks = {{TaskCategory::kIntro, 2, 1},   {TaskCategory::kBasic, 3, 1}, {TaskCategory::kCore, 2, 2},
             {TaskCategory::kBonus, 1, 1},   {TaskCategory::kGuru, 1, 2},  {TaskCategory::kSupplementary, 1, 1}};
  auto tactic = [&s](std::string code, Weights events) { s.tactics.push_back({std::move(code), normalized(std::move(events)), 8, 24}); };
  tactic("F_CourseMat_Examples", {{"read:materials-book", 0.35},
                                  {"answer:materials-book-example", 0.35},
                                  {"answer-wrong:materials-book-example", 0.3}});
  tactic("F_Lec_Engaged", {{"join-lecture:lecture-cur-wk", 0.15},
                           {"leave-lecture:lecture-cur-wk", 0.15},
                           {"read:lecture-cur-wk", 0.3},
                           {"answer:lecture-cur-wk-example", 0.25},
                           {"answer-wrong:lecture-cur-wk-example", 0.15}});
  tactic("F_Lec_Video",
         {{"watch-video:lecture-cur-wk", 0.55}, {"watch-video:lecture-prev-wk", 0.25}, {"read:lecture-cur-wk", 0.2}});
  tactic("F_CurTasks_Intro", {{"answer:tasks-cur-intro", 0.45}, {"answer-wrong:tasks-cur-intro", 0.35}, {"read:tasks-cur", 0.2}});
  tactic("F_CurTasks_Core_Attempt",
         {{"answer-wrong:tasks-cur-core", 0.65}, {"answer:tasks-cur-core", 0.1}, {"read:tasks-cur", 0.25}});
  tactic("F_CurTasks_Core_Correct",
         {{"answer:tasks-cur-core", 0.6}, {"answer-wrong:tasks-cur-core", 0.15}, {"read:tasks-cur", 0.25}});
  tactic("F_CurTasks_Basic_Attempt",
         {{"answer-wrong:tasks-cur-basic", 0.65}, {"answer:tasks-cur-basic", 0.1}, {"read:tasks-cur", 0.25}});
  tactic("F_CurTasks_Basic_Correct",
         {{"answer:tasks-cur-basic", 0.6}, {"answer-wrong:tasks-cur-basic", 0.15}, {"read:tasks-cur", 0.25}});
  tactic("F_CurTasks_Extra", {{"read:tasks-extra", 0.2},
                              {"read:tasks-supp", 0.15},
                              {"answer:tasks-cur-bonus", 0.2},
                              {"answer-wrong:tasks-cur-bonus", 0.15},
                              {"answer:tasks-cur-guru", 0.15},
                              {"answer:tasks-cur-supplementary", 0.15}});
  tactic("TA_Sess",
         {{"session-start:None", 0.35}, {"session-end:None", 0.35}, {"answer:tasks-cur-core", 0.15}, {"read:tasks-cur", 0.15}});
  tactic("F_PrevTasks_Basic", {{"answer:tasks-prev-basic", 0.4}, {"answer-wrong:tasks-prev-basic", 0.4}, {"read:tasks-prev", 0.2}});
  tactic("F_PrevTasks_Deep", {{"answer:tasks-prev-core", 0.3},
                              {"answer:tasks-prev-intro", 0.2},
                              {"check-model-answer:tasks-prev-core", 0.2},
                              {"check-model-answer:tasks-prev-intro", 0.1},
                              {"answer-wrong:tasks-prev-core", 0.2}});

  const SolveRates low{0.97, 0.93, 0.9, 0.5, 0.3, 0.3};
  const SolveRates task_focused{1.0, 0.97, 0.97, 0.4, 0.2, 0.2};
  const SolveRates high{0.2, 0.1, 0.05, 0.0, 0.0, 0.0};
  const SolveRates mandatory{0.5, 0.6, 1.0, 0.0, 0.0, 0.0};
  s.templates = {
      chain("Task-oriented, focused on performance", Risk::kLow,
            {"F_CurTasks_Intro", "F_CurTasks_Basic_Attempt", "F_CurTasks_Basic_Correct", "F_CurTasks_Core_Attempt",
             "F_CurTasks_Core_Correct"},
            9, 15, task_focused, 0.3),
      chain("Seeking understanding", Risk::kLow,
            {"F_Lec_Engaged", "F_CurTasks_Basic_Correct", "F_CurTasks_Extra", "TA_Sess"}, 9, 15, low, 0.3),
      chain("Resource-focused, more time on materials than tasks", Risk::kLow,
            {"F_CourseMat_Examples", "F_Lec_Video", "F_PrevTasks_Deep", "F_PrevTasks_Basic"}, 9, 15, low, 0.3),
      chain("Falling behind, realizing struggle too late", Risk::kHigh,
            {"F_PrevTasks_Basic", "F_CurTasks_Basic_Attempt"}, 3, 8, high, 0.3),
      chain("Attempting with examples", Risk::kHigh, {"F_CourseMat_Examples", "F_CurTasks_Core_Attempt"}, 3, 8, high,
            0.3),
      chain("Low engagement", Risk::kHigh, {"F_Lec_Engaged", "F_CurTasks_Intro"}, 3, 8, high, 0.3),
      chain("Late reliance on model answers", Risk::kHigh, {"F_PrevTasks_Deep", "F_CurTasks_Intro"}, 3, 8, high, 0.3),
      chain("Slow start, finding study pace", Risk::kHigh,
            {"F_CurTasks_Intro", "F_Lec_Video", "F_CourseMat_Examples"}, 3, 8, high, 0.3),
      chain("Struggling to understand, needing help", Risk::kHigh,
            {"F_CurTasks_Core_Attempt", "F_Lec_Engaged", "F_CurTasks_Basic_Attempt"}, 3, 8, high, 0.3),
      chain("Superficial review, stuck on a single resource", Risk::kHigh, {"F_Lec_Video"}, 3, 8, high, 0.3),
      chain("Browsing materials with sporadic task attempts", Risk::kHigh,
            {"F_CurTasks_Extra", "F_CurTasks_Basic_Attempt"}, 3, 8, high, 0.3),
      chain("Risky focus on mandatory tasks only", Risk::kHigh, {"TA_Sess", "F_CurTasks_Core_Correct"}, 4, 8, mandatory,
            0.2),
  };

  const std::string task = "Task-oriented, focused on performance", seek = "Seeking understanding",
                    resource = "Resource-focused, more time on materials than tasks";
  ProfileArchetype adaptive;
  adaptive.name = "Adaptive understanding seekers";
  adaptive.count = 20;
  adaptive.mixture = {{seek, 0.9}, {task, 0.05}, {resource, 0.05}};
  adaptive.exam_mean = 78;
  adaptive.answer_rate = 0.6;
  adaptive.themes = {{"Course Materials", 0.8}, {"Weekly Assignments", 0.7}, {"Lecture Participation", 0.6},
                     {"Emphasis on Regularity", 0.55}, {"Additional Online Materials", 0.3}};
  adaptive.opinion = {0.1, 0.3, 0.6};

  ProfileArchetype diligent;
  diligent.name = "Diligent course content followers";
  diligent.count = 14;
  diligent.mixture = {{resource, 0.9}, {seek, 0.05}, {task, 0.05}};
  diligent.exam_mean = 74;
  diligent.answer_rate = 0.6;
  diligent.themes = {{"Course Materials", 0.9}, {"Lecture Participation", 0.7}, {"Weekly Assignments", 0.6},
                     {"Group Sessions", 0.3}};
  diligent.opinion = {0.1, 0.4, 0.5};

  ProfileArchetype active;
  active.name = "Active task-focused learners";
  active.count = 5;
  active.mixture = {{task, 0.9}, {seek, 0.05}, {resource, 0.05}};
  active.exam_mean = 68;
  active.answer_rate = 0.6;
  active.themes = {{"Weekly Assignments", 0.8}, {"Group Sessions", 0.6}, {"Deadline-Driven Approach", 0.4}};
  active.opinion = {0.2, 0.4, 0.4};

  ProfileArchetype persevering;
  persevering.name = "Persevering until the end";
  persevering.count = 1;
  persevering.mixture = {{"Risky focus on mandatory tasks only", 1.0}};
  persevering.late_submissions = true;
  persevering.exam_mean = 55;
  persevering.answer_rate = 1.0;
  persevering.themes = {{"Group Sessions", 1.0}, {"Externalizing Self-Regulation", 1.0}, {"Work-Related Limitations", 1.0}};
  persevering.opinion = {0.0, 1.0, 0.0};
  persevering.outlier = true;

  ProfileArchetype dropouts;
  dropouts.name = "Course dropouts";
  dropouts.count = 7;
  dropouts.mixture = normalized({{"Low engagement", 0.3},
                                 {"Falling behind, realizing struggle too late", 0.1},
                                 {"Attempting with examples", 0.1},
                                 {"Late reliance on model answers", 0.1},
                                 {"Slow start, finding study pace", 0.1},
                                 {"Struggling to understand, needing help", 0.1},
                                 {"Superficial review, stuck on a single resource", 0.1},
                                 {"Browsing materials with sporadic task attempts", 0.1}});
  dropouts.hazard = {0, 0, 0, 0, 0, 0.25, 0.3, 0.35, 0.5, 1.0, 1.0};
  dropouts.pre_dropout = {{"Falling behind, realizing struggle too late", 0.7}, {"Late reliance on model answers", 0.3}};
  dropouts.pre_dropout_weeks = 2;
  dropouts.answer_rate = 0.0;
  dropouts.exam_mean = 0;
  dropouts.exam_sd = 0;

  s.profiles = {adaptive, diligent, active, persevering, dropouts};
  return s;
}

ArchetypeSpec history_spec(const ArchetypeSpec& spec, std::uint64_t seed) {
  ArchetypeSpec h = spec;
  h.seed = seed;
  std::size_t moved = 0;
  for (auto& p : h.profiles) {
    if (p.outlier) {
      moved += p.count;
      p.count = 0;
    }
  }
  auto largest = std::max_element(h.profiles.begin(), h.profiles.end(),
                                  [](const auto& a, const auto& b) { return a.count < b.count; });
  largest->count += moved;
  return h;
}

nlohmann::json ArchetypeSpec::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["weeks"] = weeks;
  j["first_week_start"] = format_date(first_week_start);
  j["utc_offset_minutes"] = utc_offset_minutes;
  j["intra_gap_ms"] = {intra_gap_min.count(), intra_gap_max.count()};
  j["inter_gap_ms"] = {inter_gap_min.count(), inter_gap_max.count()};
  j["noise_actions_per_week"] = noise_actions_per_week;
  j["pass_floor"] = pass_floor;
  for (const auto& t : tasks) {
    j["tasks"].push_back({{"category", risk::to_string(t.category)}, {"count", t.count}, {"points", t.points}});
  }
  for (const auto& t : tactics) {
    j["tactics"].push_back(
        {{"code", t.code}, {"events", weights_json(t.events)}, {"min_events", t.min_events}, {"max_events", t.max_events}});
  }
  for (const auto& t : templates) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [from, row] : t.transitions) rows.push_back({{"from", from}, {"to", weights_json(row)}});
    nlohmann::json solve = nlohmann::json::object();
    for (std::size_t c = 0; c < kCategories.size(); ++c) solve[risk::to_string(kCategories[c])] = t.solve[c];
    j["templates"].push_back({{"name", t.name},
                              {"risk", strategies::to_string(t.risk)},
                              {"initial", weights_json(t.initial)},
                              {"transitions", rows},
                              {"min_sessions", t.min_sessions},
                              {"max_sessions", t.max_sessions},
                              {"solve", solve},
                              {"attempt_rate", t.attempt_rate}});
  }
  for (const auto& p : profiles) {
    j["profiles"].push_back({{"name", p.name},
                             {"count", p.count},
                             {"mixture", weights_json(p.mixture)},
                             {"hazard", p.hazard},
                             {"pre_dropout", weights_json(p.pre_dropout)},
                             {"pre_dropout_weeks", p.pre_dropout_weeks},
                             {"late_submissions", p.late_submissions},
                             {"exam_mean", p.exam_mean},
                             {"exam_sd", p.exam_sd},
                             {"answer_rate", p.answer_rate},
                             {"themes", weights_json(p.themes)},
                             {"opinion", p.opinion},
                             {"outlier", p.outlier}});
  }
  return j;
}

ArchetypeSpec ArchetypeSpec::from_json(const nlohmann::json& j) {
  ArchetypeSpec s;
  try {
    s.seed = j.value("seed", std::uint64_t{42});
    s.weeks = j.value("weeks", 11);
    s.first_week_start = parse_date(j.at("first_week_start").get<std::string>());
    s.utc_offset_minutes = j.value("utc_offset_minutes", 0);
    if (j.contains("intra_gap_ms")) {
      s.intra_gap_min = Millis{j.at("intra_gap_ms").at(0).get<long long>()};
      s.intra_gap_max = Millis{j.at("intra_gap_ms").at(1).get<long long>()};
    }
    if (j.contains("inter_gap_ms")) {
      s.inter_gap_min = Millis{j.at("inter_gap_ms").at(0).get<long long>()};
      s.inter_gap_max = Millis{j.at("inter_gap_ms").at(1).get<long long>()};
    }
    s.noise_actions_per_week = j.value("noise_actions_per_week", 1.0);
    s.pass_floor = j.value("pass_floor", 0.4);
    for (const auto& t : j.at("tasks")) {
      s.tasks.push_back({risk::parse_category(t.at("category").get<std::string>()), t.at("count").get<int>(),
                         t.at("points").get<double>()});
    }
    for (const auto& t : j.at("tactics")) {
      s.tactics.push_back({t.at("code").get<std::string>(), weights_from(t.at("events")), t.value("min_events", 8),
                           t.value("max_events", 24)});
    }
    for (const auto& t : j.at("templates")) {
      StrategyTemplate st;
      st.name = t.at("name").get<std::string>();
      st.risk = strategies::parse_risk(t.at("risk").get<std::string>());
      st.initial = weights_from(t.at("initial"));
      for (const auto& r : t.at("transitions")) st.transitions.emplace_back(r.at("from").get<std::string>(), weights_from(r.at("to")));
      st.min_sessions = t.value("min_sessions", 9);
      st.max_sessions = t.value("max_sessions", 15);
      for (std::size_t c = 0; c < kCategories.size(); ++c) {
        st.solve[c] = t.at("solve").value(risk::to_string(kCategories[c]), 0.0);
      }
      st.attempt_rate = t.value("attempt_rate", 0.3);
      s.templates.push_back(std::move(st));
    }
    for (const auto& p : j.at("profiles")) {
      ProfileArchetype pa;
      pa.name = p.at("name").get<std::string>();
      pa.count = p.at("count").get<std::size_t>();
      pa.mixture = weights_from(p.at("mixture"));
      pa.hazard = p.value("hazard", std::vector<double>{});
      if (p.contains("pre_dropout")) pa.pre_dropout = weights_from(p.at("pre_dropout"));
      pa.pre_dropout_weeks = p.value("pre_dropout_weeks", 0);
      pa.late_submissions = p.value("late_submissions", false);
      pa.exam_mean = p.value("exam_mean", 70.0);
      pa.exam_sd = p.value("exam_sd", 10.0);
      pa.answer_rate = p.value("answer_rate", 0.5);
      if (p.contains("themes")) pa.themes = weights_from(p.at("themes"));
      if (p.contains("opinion")) pa.opinion = p.at("opinion").get<std::array<double, 3>>();
      pa.outlier = p.value("outlier", false);
      s.profiles.push_back(std::move(pa));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(fmt::format("invalid synthetic cohort spec: {}", ex.what()));
  }
  return s;
}

// ----------------------------------------------------------- ground truth

nlohmann::json GroundTruth::to_json() const {
  nlohmann::json j;
  j["tactic_codes"] = tactic_codes;
  j["strategy_names"] = strategy_names;
  std::vector<std::string> risks;
  for (auto r : strategy_risks) risks.push_back(strategies::to_string(r));
  j["strategy_risks"] = risks;
  j["profile_names"] = profile_names;
  j["profile_outlier"] = profile_outlier;
  j["students"] = nlohmann::json::array();
  for (const auto& s : students) {
    j["students"].push_back({{"student", s.student},
                             {"profile", s.profile},
                             {"dropout_week", s.dropout_week ? nlohmann::json(*s.dropout_week) : nlohmann::json()}});
  }
  j["weeks"] = nlohmann::json::array();
  for (const auto& w : weeks) {
    j["weeks"].push_back({{"student", w.student},
                          {"week", w.week},
                          {"strategy", w.strategy},
                          {"risk", strategies::to_string(w.risk)},
                          {"tactics", w.tactics}});
  }
  j["sessions"] = nlohmann::json::array();
  for (const auto& s : sessions) {
    j["sessions"].push_back({{"student", s.student},
                             {"week", s.week},
                             {"start", format_iso_timestamp(s.start)},
                             {"end", format_iso_timestamp(s.end)},
                             {"tactic", s.tactic},
                             {"n_events", s.n_events}});
  }
  return j;
}

GroundTruth GroundTruth::from_json(const nlohmann::json& j) {
  GroundTruth t;
  try {
    t.tactic_codes = j.at("tactic_codes").get<std::vector<std::string>>();
    t.strategy_names = j.at("strategy_names").get<std::vector<std::string>>();
    for (const auto& r : j.at("strategy_risks")) t.strategy_risks.push_back(strategies::parse_risk(r.get<std::string>()));
    t.profile_names = j.at("profile_names").get<std::vector<std::string>>();
    t.profile_outlier = j.at("profile_outlier").get<std::vector<bool>>();
    for (const auto& s : j.at("students")) {
      PlantedStudent p{s.at("student").get<std::string>(), s.at("profile").get<std::size_t>(), std::nullopt};
      if (!s.at("dropout_week").is_null()) p.dropout_week = s.at("dropout_week").get<int>();
      t.students.push_back(std::move(p));
    }
    for (const auto& w : j.at("weeks")) {
      t.weeks.push_back({w.at("student").get<std::string>(), w.at("week").get<int>(), w.at("strategy").get<std::size_t>(),
                         strategies::parse_risk(w.at("risk").get<std::string>()),
                         w.at("tactics").get<std::vector<std::size_t>>()});
    }
    for (const auto& s : j.at("sessions")) {
      t.sessions.push_back({s.at("student").get<std::string>(), s.at("week").get<int>(),
                            parse_iso_timestamp(s.at("start").get<std::string>()),
                            parse_iso_timestamp(s.at("end").get<std::string>()), s.at("tactic").get<std::size_t>(),
                            s.at("n_events").get<std::size_t>()});
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(fmt::format("invalid ground truth: {}", ex.what()));
  }
  return t;
}

std::vector<std::string> Cohort::students() const {
  std::vector<std::string> out;
  for (const auto& s : truth.students) out.push_back(s.student);
  return out;
}

// ------------------------------------------------------------- generation

namespace {

struct PendingLine {
  Timestamp ts;
  std::size_t order;
  std::string text;
};

// Concrete raw action for a (possibly week-relative) event code seen in `week`.
std::string action_for(const ingest::RuleTable& rules, const std::string& code, int week) {
  int tag = week;
  if (auto tmpl = ingest::EventCodeRegistry::week_template(code)) {
    if (ingest::EventCodeRegistry::instantiate(*tmpl, ingest::RelativeWeek::kPrev) == code) tag = week - 1;
    if (ingest::EventCodeRegistry::instantiate(*tmpl, ingest::RelativeWeek::kNext) == code) tag = week + 1;
  }
  return rules.example_action(code, tag);
}

const std::array<std::string_view, 4> kNoiseActions{"LOGIN", "LOGOUT", "VIEW_DOC/profile", "SEARCH/query"};

}  // namespace

Cohort generate(const ArchetypeSpec& spec, const ingest::RuleTable& rules) {
  const auto registry = ingest::EventCodeRegistry::default_registry();
  spec.validate(registry, rules);
  Cohort cohort;
  cohort.spec = spec;
  const auto calendar = ingest::CourseCalendar::weekly(spec.first_week_start, spec.weeks, spec.utc_offset_minutes);
  cohort.course.calendar = calendar;
  for (int w = 1; w <= spec.weeks; ++w) {
    for (const auto& layout : spec.tasks) {
      for (int k = 1; k <= layout.count; ++k) cohort.course.tasks.push_back({task_id(w, layout.category, k), w, layout.category, layout.points});
    }
  }
  double total_points = 0;
  for (const auto& t : cohort.course.tasks) total_points += t.points;

  auto& truth = cohort.truth;
  for (const auto& t : spec.tactics) truth.tactic_codes.push_back(t.code);
  for (const auto& t : spec.templates) {
    truth.strategy_names.push_back(t.name);
    truth.strategy_risks.push_back(t.risk);
  }
  for (const auto& p : spec.profiles) {
    truth.profile_names.push_back(p.name);
    truth.profile_outlier.push_back(p.outlier);
  }

  std::vector<std::size_t> assignment;
  for (std::size_t p = 0; p < spec.profiles.size(); ++p) assignment.insert(assignment.end(), spec.profiles[p].count, p);
  Rng master(derive_seed(spec.seed, 0));
  master.shuffle(assignment);
  const int width = std::max(2, static_cast<int>(std::to_string(assignment.size()).size()));

  std::vector<PendingLine> lines;
  const Timestamp course_end = calendar.week_end(spec.weeks);

  for (std::size_t i = 0; i < assignment.size(); ++i) {
    Rng rng(derive_seed(spec.seed, i + 1));
    const auto& profile = spec.profiles[assignment[i]];
    PlantedStudent student{fmt::format("s{:0{}d}", i + 1, width), assignment[i], std::nullopt};
    const std::string address = fmt::format("10.{}.{}.{}", rng.below(256), rng.below(256), 1 + rng.below(254));
    if (!profile.hazard.empty()) {
      for (int w = 2; w <= spec.weeks; ++w) {
        if (rng.bernoulli(profile.hazard[static_cast<std::size_t>(w - 1)])) {
          student.dropout_week = w;
          break;
        }
      }
    }
    const int last_active = student.dropout_week ? *student.dropout_week - 1 : spec.weeks;
    std::vector<risk::SubmissionRecord> subs;
    std::set<std::string> solved;

    for (int w = 1; w <= last_active; ++w) {
      const bool pre = student.dropout_week && profile.pre_dropout_weeks > 0 && w > last_active - profile.pre_dropout_weeks;
      const Weights& mixture = pre ? profile.pre_dropout : profile.mixture;
      const std::size_t chosen = *spec.template_index(mixture[draw(rng, mixture)].first);
      const auto& tmpl = spec.templates[chosen];
      PlantedWeek week{student.student, w, chosen, tmpl.risk, {}};

      const auto n_sessions = rng.between(tmpl.min_sessions, tmpl.max_sessions);
      std::size_t tactic = *spec.tactic_index(tmpl.initial[draw(rng, tmpl.initial)].first);
      const Timestamp week_start = calendar.week_start(w);
      const Timestamp limit = calendar.week_end(w) - std::chrono::hours{1};
      Timestamp t = week_start + uniform_millis(rng, 30min, 12h);
      for (long long s = 0; s < n_sessions; ++s) {
        if (s > 0) {
          const auto& row = std::find_if(tmpl.transitions.begin(), tmpl.transitions.end(),
                                         [&](const auto& r) { return r.first == spec.tactics[tactic].code; });
          if (row != tmpl.transitions.end()) tactic = *spec.tactic_index(row->second[draw(rng, row->second)].first);
        }
        const auto& arch = spec.tactics[tactic];
        const auto n_events = rng.between(arch.min_events, arch.max_events);
        std::vector<std::pair<Timestamp, std::string>> events;
        Timestamp e = t;
        for (long long k = 0; k < n_events; ++k) {
          std::string code = arch.events[draw(rng, arch.events)].first;
          if (k > 0) {
            const bool debounce = code == events.back().second && registry.is_debounced(code);
            e += uniform_millis(rng, debounce ? std::max(spec.intra_gap_min, Millis{61000}) : spec.intra_gap_min,
                                spec.intra_gap_max);
          }
          events.emplace_back(e, std::move(code));
        }
        if (events.back().first > limit && s > 0) break;
        for (const auto& [ts, code] : events) {
          lines.push_back({ts, lines.size(),
                           ingest::format_raw_line({ts, student.student, address, action_for(rules, code, w)})});
        }
        truth.sessions.push_back({student.student, w, events.front().first, events.back().first, tactic,
                                  static_cast<std::size_t>(n_events)});
        week.tactics.push_back(tactic);
        t = events.back().first + uniform_millis(rng, spec.inter_gap_min, spec.inter_gap_max);
      }
      truth.weeks.push_back(std::move(week));

      const double whole = std::floor(spec.noise_actions_per_week);
      const int noise = static_cast<int>(whole) + (rng.bernoulli(spec.noise_actions_per_week - whole) ? 1 : 0);
      for (int k = 0; k < noise; ++k) {
        const Timestamp ts = week_start + uniform_millis(rng, 0ms, std::chrono::duration_cast<Millis>(limit - week_start));
        lines.push_back({ts, lines.size(),
                         ingest::format_raw_line({ts, student.student, address, std::string(kNoiseActions[rng.below(4)])})});
        ++cohort.noise_lines;
      }

      const Timestamp sub_lo = profile.late_submissions ? course_end + 1h : week_start + 1h;
      const Timestamp sub_hi = profile.late_submissions ? course_end + std::chrono::hours{120} : limit;
      auto sub_time = [&]() {
        return sub_lo + uniform_millis(rng, 0ms, std::chrono::duration_cast<Millis>(sub_hi - sub_lo));
      };
      for (const auto& task : cohort.course.tasks) {
        if (task.week != w) continue;
        const auto c = static_cast<std::size_t>(task.category);
        const bool solve = rng.bernoulli(tmpl.solve[c]);
        const int wrong = solve ? static_cast<int>(rng.below(3)) : (rng.bernoulli(tmpl.attempt_rate) ? 1 + static_cast<int>(rng.below(2)) : 0);
        std::vector<Timestamp> times;
        for (int k = 0; k < wrong + (solve ? 1 : 0); ++k) times.push_back(sub_time());
        std::sort(times.begin(), times.end());
        for (std::size_t k = 0; k < times.size(); ++k) {
          const bool correct = solve && k + 1 == times.size();
          subs.push_back({times[k], student.student, w, task.id, task.category, correct});
          if (correct) solved.insert(task.id);
        }
      }
    }

    auto points_of = [&](bool before_deadline) {
      double p = 0;
      for (const auto& s : subs) {
        if (!s.correct) continue;
        if (before_deadline && s.timestamp >= calendar.week_end(s.week)) continue;
        p += cohort.course.find(s.task_id)->points;
      }
      return 100.0 * p / total_points;
    };
    if (!student.dropout_week) {
      // Passing students reach the weekly-task floor, catching up after the course if needed.
      for (auto category : {TaskCategory::kCore, TaskCategory::kBasic, TaskCategory::kIntro}) {
        for (const auto& task : cohort.course.tasks) {
          if (points_of(false) >= 100.0 * spec.pass_floor) break;
          if (task.category != category || solved.count(task.id)) continue;
          subs.push_back({course_end + uniform_millis(rng, 1h, std::chrono::hours{120}), student.student, task.week,
                          task.id, task.category, true});
          solved.insert(task.id);
        }
      }
    }
    std::sort(subs.begin(), subs.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });

    risk::GradeRecord grade{student.student, points_of(true), points_of(false), 0.0, 0};
    if (!student.dropout_week) {
      grade.exam_pct = std::clamp(std::round(profile.exam_mean + profile.exam_sd * rng.normal()), 0.0, 100.0);
      const double score = 0.5 * grade.task_pct_after + 0.5 * grade.exam_pct;
      grade.grade = std::clamp(static_cast<int>(std::floor((score - 40.0) / 10.0)) + 1, 1, 5);
    }
    grade.task_pct_before = std::round(grade.task_pct_before * 100) / 100;
    grade.task_pct_after = std::round(grade.task_pct_after * 100) / 100;
    cohort.grades.push_back(grade);
    cohort.submissions.insert(cohort.submissions.end(), subs.begin(), subs.end());

    if (rng.bernoulli(profile.answer_rate)) {
      bool any = false;
      for (const auto& [theme, p] : profile.themes) {
        if (rng.bernoulli(p)) {
          cohort.themes.push_back({student.student, theme});
          any = true;
        }
      }
      const std::vector<double> op(profile.opinion.begin(), profile.opinion.end());
      cohort.opinions[student.student] = static_cast<profiling::Opinion>(rng.categorical(op));
      if (!any && !profile.themes.empty()) cohort.themes.push_back({student.student, profile.themes.front().first});
    }
    truth.students.push_back(std::move(student));
  }

  std::sort(cohort.submissions.begin(), cohort.submissions.end(), [](const auto& a, const auto& b) {
    return std::tie(a.timestamp, a.student, a.task_id) < std::tie(b.timestamp, b.student, b.task_id);
  });
  std::sort(lines.begin(), lines.end(),
            [](const auto& a, const auto& b) { return std::tie(a.ts, a.order) < std::tie(b.ts, b.order); });
  std::string raw;
  for (const auto& l : lines) {
    raw += l.text;
    raw += '\n';
  }
  cohort.raw_log = std::move(raw);
  return cohort;
}

std::vector<std::pair<std::string, std::string>> cohort_files(const Cohort& c) {
  return {
      {"raw.log", c.raw_log},
      {"course.json", c.course.to_json().dump(2) + "\n"},
      {"submissions.csv", risk::submissions_csv(c.submissions)},
      {"grades.csv", risk::grades_csv(c.grades)},
      {"themes.csv", profiling::themes_csv(c.themes)},
      {"opinions.csv", profiling::opinions_csv(c.opinions)},
      {"truth.json", c.truth.to_json().dump(1) + "\n"},
      {"synth_spec.json", c.spec.to_json().dump(2) + "\n"},
  };
}

// ---------------------------------------------------------------- recovery

namespace {

template <typename Key>
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> align(const std::vector<std::pair<Key, std::size_t>>& planted,
                                                                    const std::vector<std::pair<Key, std::size_t>>& recovered,
                                                                    const std::string& layer) {
  std::map<Key, std::size_t> rec;
  for (const auto& [k, v] : recovered) {
    if (!rec.emplace(k, v).second) throw ValidationError(fmt::format("{}: duplicate recovered identifier", layer));
  }
  if (rec.size() != planted.size()) {
    throw ValidationError(fmt::format("{}: {} recovered identifiers for {} planted", layer, rec.size(), planted.size()));
  }
  std::vector<std::size_t> a, b;
  for (const auto& [k, v] : planted) {
    auto it = rec.find(k);
    if (it == rec.end()) throw ValidationError(fmt::format("{}: recovered identifiers do not match the planted ones", layer));
    a.push_back(v);
    b.push_back(it->second);
  }
  return {a, b};
}

double ari(const std::pair<std::vector<std::size_t>, std::vector<std::size_t>>& ab) {
  if (ab.first.empty()) return 1.0;
  return clustering::adjusted_rand_index(ab.first, ab.second);
}

}  // namespace

RecoveryScores score_recovery(const GroundTruth& truth, const RecoveredLabels& recovered) {
  RecoveryScores out;
  std::vector<std::pair<std::pair<std::string, Timestamp>, std::size_t>> sessions;
  for (const auto& s : truth.sessions) sessions.push_back({{s.student, s.start}, s.tactic});
  out.tactic = ari(align(sessions, recovered.sessions, "sessions"));

  std::vector<std::pair<std::pair<std::string, int>, std::size_t>> weeks;
  for (const auto& w : truth.weeks) weeks.push_back({{w.student, w.week}, w.strategy});
  const auto all = align(weeks, recovered.strategies, "strategies");
  out.strategy = ari(all);
  for (auto risk : {Risk::kLow, Risk::kHigh}) {
    std::pair<std::vector<std::size_t>, std::vector<std::size_t>> part;
    for (std::size_t i = 0; i < truth.weeks.size(); ++i) {
      if (truth.weeks[i].risk != risk) continue;
      part.first.push_back(all.first[i]);
      part.second.push_back(all.second[i]);
    }
    (risk == Risk::kLow ? out.strategy_low : out.strategy_high) = ari(part);
  }

  std::vector<std::pair<std::string, std::size_t>> students;
  for (const auto& s : truth.students) students.push_back({s.student, s.profile});
  const auto prof = align(students, recovered.profiles, "profiles");
  out.profile = ari(prof);
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> core;
  for (std::size_t i = 0; i < truth.students.size(); ++i) {
    const auto p = truth.students[i].profile;
    if (p < truth.profile_outlier.size() && truth.profile_outlier[p]) continue;
    core.first.push_back(prof.first[i]);
    core.second.push_back(prof.second[i]);
  }
  out.profile_archetypes = ari(core);
  return out;
}

}  // namespace srl::synth
