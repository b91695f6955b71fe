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

#include "srl/report.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <set>

#include <fmt/core.h>

#include "srl/common.hpp"
#include "srl/io.hpp"

namespace srl::report {

namespace fs = std::filesystem;

namespace artifact {
std::string type_graph_stem(std::size_t type_id) { return fmt::format("{}/type_{:02}", kGraphs, type_id + 1); }
std::string profile_graph_stem(std::size_t cluster) { return fmt::format("{}/profile_{}", kGraphs, cluster + 1); }
std::string strategy_fomm_path(const std::string& student, int week) {
  return fmt::format("{}/fomm/{}_w{:02}.dot", kGraphs, student, week);
}
}  // namespace artifact

namespace {

using io::html_escape;

constexpr const char* kStyle =
    "body{font-family:sans-serif;margin:2em;max-width:70em}"
    "table{border-collapse:collapse;margin:1em 0}"
    "th,td{border:1px solid #bbb;padding:.25em .6em;text-align:left;vertical-align:top}"
    "th{background:#eee}.note{color:#555;font-style:italic}.src{color:#777;font-size:.85em}";

std::string href(std::string_view path) {
  std::string out;
  for (char c : path) {
    if (c == ' ') {
      out += "%20";
    } else if (c == '"') {
      out += "%22";
    } else {
      out += c;
    }
  }
  return out;
}

std::string link(std::string_view target, std::string_view text) {
  return fmt::format("<a href=\"{}\">{}</a>", href(target), html_escape(text));
}

std::string note(std::string_view text) { return fmt::format("<p class=\"note\">{}</p>\n", html_escape(text)); }

std::string source(std::string_view data_file) {
  return fmt::format("<p class=\"src\">Source: {}</p>\n", link(data_file, data_file));
}

std::string page(std::string_view title, std::string_view body) {
  return fmt::format(
      "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{0}</title>\n"
      "<style>{1}</style>\n</head>\n<body>\n<p><a href=\"index.html\">Index</a></p>\n<h1>{0}</h1>\n{2}</body>\n</html>\n",
      html_escape(title), kStyle, body);
}

// Cell renderer: returns the HTML for a cell, given the row index.
using CellFn = std::function<std::string(std::size_t row)>;

struct Column {
  std::string heading;
  CellFn cell;
};

Column text_column(const io::CsvTable& t, const std::string& name, std::string heading = {}) {
  t.require_columns({name});
  return {heading.empty() ? name : heading, [&t, name](std::size_t r) { return html_escape(t.at(r, name)); }};
}

std::string table(const std::vector<Column>& columns, const std::vector<std::size_t>& rows) {
  std::string out = "<table>\n<thead><tr>";
  for (const auto& c : columns) out += "<th>" + html_escape(c.heading) + "</th>";
  out += "</tr></thead>\n<tbody>\n";
  for (auto r : rows) {
    out += "<tr>";
    for (const auto& c : columns) out += "<td>" + c.cell(r) + "</td>";
    out += "</tr>\n";
  }
  out += "</tbody>\n</table>\n";
  return out;
}

std::vector<std::size_t> all_rows(const io::CsvTable& t) {
  std::vector<std::size_t> rows(t.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

std::vector<std::size_t> rows_where(const io::CsvTable& t, const std::string& column, const std::string& value) {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < t.size(); ++r) {
    if (t.at(r, column) == value) rows.push_back(r);
  }
  return rows;
}

std::string full_table_rows(const io::CsvTable& t, const std::vector<std::size_t>& rows) {
  std::vector<Column> cols;
  for (const auto& h : t.header()) cols.push_back(text_column(t, h));
  return table(cols, rows);
}

std::string full_table(const io::CsvTable& t) { return full_table_rows(t, all_rows(t)); }

class Bundle {
 public:
  Bundle(fs::path work, fs::path out) : work_(std::move(work)), out_(std::move(out)) {}

  bool has(const std::string& rel) const { return fs::is_regular_file(work_ / rel); }

  // Copies a work-directory artifact to `dest` inside the bundle.
  const std::string& copy(const std::string& rel, const std::string& dest) {
    if (!written_.count(dest)) write(dest, io::read_file(work_ / rel));
    return *written_.find(dest);
  }

  // CSV artifacts land under data/; graph artifacts keep their relative path.
  std::optional<io::CsvTable> csv(const std::string& rel, bool required, std::string* bundle_path = nullptr) {
    if (!has(rel)) {
      if (required) throw MissingInputError((work_ / rel).string());
      return std::nullopt;
    }
    const std::string dest = rel.rfind(artifact::kGraphs, 0) == 0 ? rel : "data/" + rel;
    copy(rel, dest);
    if (bundle_path) *bundle_path = dest;
    return io::CsvTable::parse(io::read_file(work_ / rel));
  }

  void write(const std::string& rel, const std::string& content) {
    io::write_file_atomic(out_ / rel, content);
    written_.insert(rel);
  }

  std::vector<std::string> written() const { return {written_.begin(), written_.end()}; }

 private:
  fs::path work_;
  fs::path out_;
  std::set<std::string> written_;
};

std::string type_page(std::size_t type_id) { return fmt::format("strategy_type_{:02}.html", type_id + 1); }
std::string profile_page(std::size_t cluster) { return fmt::format("profile_{}.html", cluster + 1); }

std::size_t index_cell(const io::CsvTable& t, std::size_t r, const std::string& column) {
  const auto v = io::parse_int(t.at(r, column));
  if (v < 0) throw ValidationError(fmt::format("negative {} in report artifact", column));
  return static_cast<std::size_t>(v);
}

std::string heuristic_section(Bundle& b, const std::string& stem, const std::string& heading) {
  std::string body = "<h2>" + html_escape(heading) + "</h2>\n";
  const std::string dot = stem + "_heuristic.dot";
  std::string edges_path;
  const auto edges = b.has(dot) ? b.csv(stem + "_heuristic_edges.csv", false, &edges_path) : std::nullopt;
  if (!edges) return body + note("Heuristic net not available for this group.");
  b.copy(dot, dot);
  body += fmt::format("<p>Graph source: {}</p>\n", link(dot, dot));
  if (edges->size() == 0) return body + note("No transitions pass the dependency and frequency thresholds.");
  return body + full_table(*edges) + source(edges_path);
}

// Link to the FOMM graph of one weekly strategy, when it exists.
std::string fomm_cell(Bundle& b, const std::string& student, const std::string& week) {
  const auto rel = artifact::strategy_fomm_path(student, static_cast<int>(io::parse_int(week)));
  if (!b.has(rel)) return "<span class=\"note\">not available</span>";
  b.copy(rel, rel);
  return link(rel, "FOMM");
}

struct Tables {
  io::CsvTable summary;        // strategy types
  io::CsvTable types;          // per weekly strategy
  io::CsvTable profiles;       // per profile cluster
  io::CsvTable members;        // per student
  std::optional<io::CsvTable> tactic_freq;
  std::optional<io::CsvTable> themes;
  std::optional<io::CsvTable> waterfall;
  std::optional<io::CsvTable> comparisons;
  std::string summary_path, types_path, profiles_path, members_path, tactic_freq_path, themes_path, waterfall_path,
      comparisons_path;
};

std::string strategy_type_body(Bundle& b, const Tables& t, std::size_t r) {
  const auto& s = t.summary;
  const std::string id = s.at(r, "type_id");
  std::string body = fmt::format("<p>{}</p>\n", html_escape(s.at(r, "description")));
  body += table({{"Risk", [&](std::size_t i) { return html_escape(s.at(i, "risk")); }},
                 {"Weekly strategies", [&](std::size_t i) { return html_escape(s.at(i, "count")); }},
                 {"Mean dropout probability", [&](std::size_t i) { return html_escape(s.at(i, "mean_p_drop")); }},
                 {"Median dropout probability", [&](std::size_t i) { return html_escape(s.at(i, "median_p_drop")); }}},
                {r});
  body += source(t.summary_path);

  body += "<h2>Mean tactic frequencies</h2>\n";
  if (t.tactic_freq) {
    body += full_table_rows(*t.tactic_freq, rows_where(*t.tactic_freq, "type_id", id)) + source(t.tactic_freq_path);
  } else {
    body += note("Tactic frequencies not available.");
  }

  const auto stem = artifact::type_graph_stem(index_cell(s, r, "type_id"));
  body += "<h2>Pooled first-order Markov model</h2>\n";
  if (b.has(stem + "_fomm.dot")) {
    b.copy(stem + "_fomm.dot", stem + "_fomm.dot");
    body += fmt::format("<p>Graph source: {}</p>\n", link(stem + "_fomm.dot", stem + "_fomm.dot"));
  } else {
    body += note("Pooled model not available.");
  }
  body += heuristic_section(b, stem, "Heuristic net");

  body += "<h2>Weekly strategies</h2>\n";
  const auto& ty = t.types;
  body += table({text_column(ty, "student", "Student"),
                 text_column(ty, "week", "Week"),
                 text_column(ty, "p_drop", "Dropout probability"),
                 {"Transition graph", [&](std::size_t i) { return fomm_cell(b, ty.at(i, "student"), ty.at(i, "week")); }}},
                rows_where(ty, "type_id", id));
  body += source(t.types_path);
  return body;
}

std::string profile_body(Bundle& b, const Tables& t, std::size_t r) {
  const auto& p = t.profiles;
  const std::string cluster = p.at(r, "cluster_index");
  std::string body;
  body += "<h2>Dashboard</h2>\n";
  body += table({{"Students", [&](std::size_t i) { return html_escape(p.at(i, "n_students")); }},
                 {"Median dropout probability", [&](std::size_t i) { return html_escape(p.at(i, "median_p_drop")); }},
                 {"Median grade", [&](std::size_t i) { return html_escape(p.at(i, "median_grade")); }},
                 {"Median task %", [&](std::size_t i) { return html_escape(p.at(i, "median_task_pct")); }},
                 {"Median exam %", [&](std::size_t i) { return html_escape(p.at(i, "median_exam_pct")); }},
                 {"Mean dropout probability", [&](std::size_t i) { return html_escape(p.at(i, "mean_p_drop")); }}},
                {r});
  body += source(t.profiles_path);

  body += "<h2>Majority themes</h2>\n";
  const bool answerers = p.at(r, "answerers") != "0";
  if (!t.themes) {
    body += note("No self-reports: this cohort has no theme codes.");
  } else if (!answerers) {
    body += note("No self-reports: no student in this cluster answered the reflection questions.");
  } else {
    const auto rows = rows_where(*t.themes, "cluster_index", cluster);
    body += fmt::format("<p>Answerers in this cluster: {}</p>\n", html_escape(p.at(r, "answerers")));
    if (rows.empty()) {
      body += note("No theme is mentioned by at least half of the answerers.");
    } else {
      body += table({text_column(*t.themes, "theme", "Theme"), text_column(*t.themes, "students", "Students")}, rows);
    }
    body += source(t.themes_path);
  }

  body += "<h2>Opinion distribution</h2>\n";
  if (!answerers) body += note("No self-reports: every member's opinion is absent.");
  body += table({{"Negative", [&](std::size_t i) { return html_escape(p.at(i, "opinion_negative")); }},
                 {"Neutral", [&](std::size_t i) { return html_escape(p.at(i, "opinion_neutral")); }},
                 {"Positive", [&](std::size_t i) { return html_escape(p.at(i, "opinion_positive")); }},
                 {"Absent", [&](std::size_t i) { return html_escape(p.at(i, "opinion_absent")); }}},
                {r});
  body += source(t.profiles_path);

  body += heuristic_section(b, artifact::profile_graph_stem(index_cell(p, r, "cluster_index")), "Combined heuristic net");

  const auto member_rows = rows_where(t.members, "cluster_index", cluster);
  std::set<std::string> members;
  for (auto m : member_rows) members.insert(t.members.at(m, "student"));

  body += "<h2>Weekly strategies and transition graphs</h2>\n";
  const auto& ty = t.types;
  std::vector<std::size_t> strategy_rows;
  std::map<std::string, std::string> last_week;
  for (std::size_t i = 0; i < ty.size(); ++i) {
    const auto& student = ty.at(i, "student");
    if (!members.count(student)) continue;
    strategy_rows.push_back(i);
    auto& w = last_week[student];
    if (w.empty() || io::parse_int(ty.at(i, "week")) > io::parse_int(w)) w = ty.at(i, "week");
  }
  body += table({text_column(ty, "student", "Student"),
                 text_column(ty, "week", "Week"),
                 {"Strategy type",
                  [&](std::size_t i) {
                    return link(type_page(index_cell(ty, i, "type_id")), ty.at(i, "type_name"));
                  }},
                 text_column(ty, "p_drop", "Dropout probability"),
                 {"Transition graph", [&](std::size_t i) { return fomm_cell(b, ty.at(i, "student"), ty.at(i, "week")); }}},
                strategy_rows);
  body += source(t.types_path);

  body += "<h2>Dropout explanations</h2>\n";
  if (!t.waterfall) {
    body += note("Explanation waterfalls not available.");
  } else {
    const auto& w = *t.waterfall;
    body += "<p>Feature contributions for each student's last active week, largest first.</p>\n";
    for (const auto& student : members) {
      auto it = last_week.find(student);
      if (it == last_week.end()) continue;
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (w.at(i, "student") == student && w.at(i, "week") == it->second) rows.push_back(i);
      }
      body += fmt::format("<h3>{}, week {}</h3>\n", html_escape(student), html_escape(it->second));
      if (rows.empty()) {
        body += note("No explanation recorded for this week.");
        continue;
      }
      body += table({text_column(w, "step", "Step"), text_column(w, "feature", "Feature"),
                     text_column(w, "value", "Value"), text_column(w, "contribution", "Contribution"),
                     text_column(w, "cumulative_logit", "Cumulative logit"),
                     text_column(w, "p_drop", "Dropout probability")},
                    rows);
    }
    body += source(t.waterfall_path);
  }

  body += "<h2>Comparison with the other students</h2>\n";
  if (!t.comparisons) {
    body += note("Statistical comparisons not available.");
  } else {
    const auto& c = *t.comparisons;
    body += table({text_column(c, "variable", "Variable"), text_column(c, "n_cluster", "n (cluster)"),
                   text_column(c, "n_rest", "n (others)"), text_column(c, "formatted", "Result")},
                  rows_where(c, "cluster", p.at(r, "name")));
    body += source(t.comparisons_path);
  }

  body += "<h2>Members</h2>\n<p>";
  bool first = true;
  for (const auto& m : members) {
    body += (first ? "" : ", ") + html_escape(m);
    first = false;
  }
  body += "</p>\n" + source(t.members_path);
  return body;
}

std::string cvi_body(Bundle& b) {
  std::string body;
  for (const auto& [file, heading] : {std::pair{artifact::kTacticCvi, "Tactics (k-medoids)"},
                                      std::pair{artifact::kStrategyCvi, "Strategy types (EM)"},
                                      std::pair{artifact::kProfileCvi, "Profiles (complete linkage)"}}) {
    body += fmt::format("<h2>{}</h2>\n", html_escape(heading));
    std::string path;
    const auto t = b.csv(file, false, &path);
    if (!t) {
      body += note("Validity indices not computed for this layer.");
      continue;
    }
    body += full_table(*t) + source(path);
  }
  return body;
}

}  // namespace

std::vector<std::string> emit_report(const fs::path& work_dir, const fs::path& out_dir, const ReportOptions& options) {
  if (fs::exists(out_dir)) {
    if (!fs::is_directory(out_dir) || (!fs::is_empty(out_dir) && !fs::exists(out_dir / "index.html"))) {
      throw ValidationError(fmt::format("refusing to replace {}: not a report bundle", out_dir.string()));
    }
    fs::remove_all(out_dir);
  }
  Bundle b(work_dir, out_dir);

  std::string tactics_path;
  const auto tactics = *b.csv(artifact::kTacticTable, true, &tactics_path);
  Tables t;
  t.summary = *b.csv(artifact::kStrategyTypeSummary, true, &t.summary_path);
  t.types = *b.csv(artifact::kStrategyTypes, true, &t.types_path);
  t.profiles = *b.csv(artifact::kProfileSummary, true, &t.profiles_path);
  t.members = *b.csv(artifact::kProfileMembers, true, &t.members_path);
  t.summary.require_columns({"type_id", "risk", "name", "description", "count", "mean_p_drop", "median_p_drop"});
  t.types.require_columns({"student", "week", "risk", "type_id", "type_name", "p_drop"});
  t.profiles.require_columns({"cluster_index", "name", "n_students", "median_task_pct", "median_exam_pct",
                              "median_grade", "mean_p_drop", "median_p_drop", "answerers", "opinion_negative",
                              "opinion_neutral", "opinion_positive", "opinion_absent"});
  t.members.require_columns({"student", "cluster_index", "cluster_name"});
  t.tactic_freq = b.csv(artifact::kStrategyTypeTactics, false, &t.tactic_freq_path);
  t.themes = b.csv(artifact::kProfileThemes, false, &t.themes_path);
  t.waterfall = b.csv(artifact::kWaterfall, false, &t.waterfall_path);
  t.comparisons = b.csv(artifact::kComparisons, false, &t.comparisons_path);

  // Tactic table.
  {
    std::string body = full_table(tactics) + source(tactics_path);
    std::string prop;
    if (b.csv(artifact::kTacticProportions, false, &prop)) {
      body += fmt::format("<p>Event-code proportions per tactic: {}</p>\n", link(prop, prop));
    }
    b.write("tactics.html", page("Learning tactics", body));
  }

  // Strategy type pages.
  for (std::size_t r = 0; r < t.summary.size(); ++r) {
    const auto id = index_cell(t.summary, r, "type_id");
    b.write(type_page(id), page(fmt::format("Strategy type: {}", t.summary.at(r, "name")), strategy_type_body(b, t, r)));
  }

  // Profile pages.
  for (std::size_t r = 0; r < t.profiles.size(); ++r) {
    const auto c = index_cell(t.profiles, r, "cluster_index");
    b.write(profile_page(c), page(fmt::format("Profile: {}", t.profiles.at(r, "name")), profile_body(b, t, r)));
  }

  b.write("cvi.html", page("Cluster validity indices", cvi_body(b)));

  std::string dendrogram;
  if (b.has(artifact::kDendrogramSvg)) {
    b.copy(artifact::kDendrogramSvg, artifact::kDendrogramSvg);
    dendrogram = fmt::format("<h2>Profile dendrogram</h2>\n<p><img src=\"{0}\" alt=\"Complete-linkage dendrogram\"></p>\n",
                             artifact::kDendrogramSvg);
    if (b.has(artifact::kDendrogramDot)) {
      b.copy(artifact::kDendrogramDot, artifact::kDendrogramDot);
      dendrogram += fmt::format("<p>Graph source: {}</p>\n", link(artifact::kDendrogramDot, artifact::kDendrogramDot));
    }
  }

  // Index.
  std::string body;
  std::string run_path;
  if (const auto run = b.csv(artifact::kRunSummary, false, &run_path)) {
    body += "<h2>Run summary</h2>\n" + full_table(*run) + source(run_path);
  }
  body += fmt::format("<h2>Learning tactics</h2>\n<p>{}</p>\n", link("tactics.html", "Tactic table"));
  body += "<h2>Strategy types</h2>\n";
  {
    const auto& s = t.summary;
    body += table({{"Type",
                    [&](std::size_t i) { return link(type_page(index_cell(s, i, "type_id")), s.at(i, "name")); }},
                   text_column(s, "risk", "Risk"), text_column(s, "count", "Weekly strategies"),
                   text_column(s, "median_p_drop", "Median dropout probability")},
                  all_rows(s));
    body += source(t.summary_path);
  }
  body += "<h2>Student profiles</h2>\n";
  {
    const auto& p = t.profiles;
    body += table({{"Profile",
                    [&](std::size_t i) { return link(profile_page(index_cell(p, i, "cluster_index")), p.at(i, "name")); }},
                   text_column(p, "n_students", "Students"), text_column(p, "median_p_drop", "Median dropout probability"),
                   text_column(p, "median_grade", "Median grade")},
                  all_rows(p));
    body += source(t.profiles_path);
  }
  body += dendrogram;
  body += fmt::format("<h2>Model selection</h2>\n<p>{}</p>\n", link("cvi.html", "Cluster validity indices"));
  std::string notes_path;
  if (const auto notes = b.csv(artifact::kStrategyNotes, false, &notes_path); notes && notes->size() > 0) {
    body += "<h2>Notes</h2>\n" + full_table(*notes) + source(notes_path);
  }
  body += "<h2>Data files</h2>\n<ul>\n";
  for (const auto& f : b.written()) {
    if (f.rfind("data/", 0) == 0) body += "<li>" + link(f, f) + "</li>\n";
  }
  body += "</ul>\n";
  b.write("index.html", page(options.title, body));
  return b.written();
}

std::vector<LinkIssue> check_links(const fs::path& bundle_dir) {
  static const std::regex ref(R"re((?:href|src)\s*=\s*"([^"]*)")re", std::regex::icase);
  std::vector<LinkIssue> issues;
  if (!fs::is_directory(bundle_dir)) throw MissingInputError(bundle_dir.string());
  const auto root = fs::weakly_canonical(bundle_dir);
  std::vector<fs::path> pages;
  for (const auto& e : fs::recursive_directory_iterator(bundle_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".html") pages.push_back(e.path());
  }
  std::sort(pages.begin(), pages.end());
  for (const auto& p : pages) {
    const auto html = io::read_file(p);
    const auto rel_page = fs::relative(p, bundle_dir).generic_string();
    for (auto it = std::sregex_iterator(html.begin(), html.end(), ref); it != std::sregex_iterator(); ++it) {
      std::string target = (*it)[1].str();
      if (target.empty()) {
        issues.push_back({rel_page, target});
        continue;
      }
      if (target[0] == '#' || target.find("://") != std::string::npos || target.rfind("mailto:", 0) == 0 ||
          target.rfind("data:", 0) == 0) {
        continue;
      }
      std::string path = target.substr(0, target.find_first_of("#?"));
      for (std::size_t pos; (pos = path.find("%20")) != std::string::npos;) path.replace(pos, 3, " ");
      for (std::size_t pos; (pos = path.find("%22")) != std::string::npos;) path.replace(pos, 3, "\"");
      const auto resolved = fs::weakly_canonical(p.parent_path() / path);
      const auto inside = fs::relative(resolved, root);
      const bool escapes = inside.empty() || *inside.begin() == "..";
      if (path.front() == '/' || escapes || !fs::is_regular_file(resolved)) issues.push_back({rel_page, target});
    }
  }
  return issues;
}

}  // namespace srl::report
