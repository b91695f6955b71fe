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

#include "srl/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "srl/clustering.hpp"
#include "srl/common.hpp"
#include "srl/ingest.hpp"
#include "srl/io.hpp"
#include "srl/pipeline.hpp"
#include "srl/profiling.hpp"
#include "srl/report.hpp"
#include "srl/risk.hpp"
#include "srl/sessions.hpp"
#include "srl/strategies.hpp"
#include "srl/synth.hpp"
#include "srl/tactics.hpp"

namespace srl::cli {

namespace fs = std::filesystem;
using nlohmann::json;
namespace artifact = report::artifact;

namespace {

struct Context {
  fs::path data = ".";
  fs::path work = "run";
  std::optional<fs::path> history;
  std::optional<fs::path> model;
  std::optional<fs::path> synth_spec;
  bool synth_first = false;
  bool seed_given = false;
  bool cvi = true;
  std::string title = report::ReportOptions{}.title;
  pipeline::PipelineConfig config;
  ingest::RuleTable rules = ingest::RuleTable::default_rules();
  ingest::EventCodeRegistry registry = ingest::EventCodeRegistry::default_registry();
  std::ostream* out = nullptr;

  fs::path history_dir() const { return history ? *history : data / "history"; }
};

json parse_json(const std::string& text, const fs::path& path) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& ex) {
    throw ValidationError(fmt::format("{}: invalid JSON: {}", path.string(), ex.what()));
  }
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

// Reads inputs and writes outputs of one stage, recording both in a manifest.
class Stage {
 public:
  Stage(std::string name, const Context& ctx, fs::path root) : name_(std::move(name)), ctx_(ctx), root_(std::move(root)) {}
  Stage(std::string name, const Context& ctx) : Stage(std::move(name), ctx, ctx.work) {}

  std::string read(const fs::path& path) {
    auto text = io::read_file(path);
    inputs_[path.generic_string()] = io::sha256_hex(text);
    return text;
  }

  std::optional<std::string> read_optional(const fs::path& path) {
    if (!fs::exists(path)) return std::nullopt;
    return read(path);
  }

  void write(const std::string& rel, std::string_view content) {
    io::write_file_atomic(root_ / rel, content);
    outputs_[rel] = io::sha256_hex(content);
  }

  void record_output(const std::string& rel) { outputs_[rel] = io::sha256_hex(io::read_file(root_ / rel)); }

  void clear(const std::string& rel_dir, std::string_view prefix = {}) {
    const auto dir = root_ / rel_dir;
    if (!fs::is_directory(dir)) return;
    std::vector<fs::path> doomed;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().filename().string().rfind(prefix, 0) == 0) doomed.push_back(e.path());
    }
    for (const auto& p : doomed) fs::remove_all(p);
  }

  json manifest() const {
    return {{"stage", name_},       {"tool", "srltrace"},  {"version", std::string(kVersion)},
            {"config", ctx_.config.to_json()}, {"inputs", inputs_}, {"outputs", outputs_}};
  }

  const std::map<std::string, std::string>& inputs() const { return inputs_; }
  const std::map<std::string, std::string>& outputs() const { return outputs_; }

  void finish(std::string_view summary) {
    io::write_file_atomic(root_ / "manifests" / (name_ + ".json"), dump(manifest()));
    *ctx_.out << name_ << ": " << summary << "\n";
  }

 private:
  std::string name_;
  const Context& ctx_;
  fs::path root_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

risk::CourseSpec load_course(Stage& s, const fs::path& path) {
  return risk::CourseSpec::from_json(parse_json(s.read(path), path));
}

tactics::TacticDetection load_tactics(Stage& s, const Context& c) {
  const auto path = c.work / artifact::kTactics;
  auto det = tactics::tactics_from_json(parse_json(s.read(path), path));
  if (det.tactics.empty()) throw ValidationError(fmt::format("{}: no tactics", path.string()));
  return det;
}

std::vector<std::string> tactic_codes(const tactics::TacticDetection& det) {
  std::vector<std::string> codes;
  for (const auto& t : det.tactics) codes.push_back(t.code);
  return codes;
}

profiling::CohortData load_cohort(Stage& s, const Context& c, bool* have_themes) {
  profiling::CohortData data;
  for (auto& g : risk::parse_grades_csv(s.read(c.data / "grades.csv"))) data.grades[g.student] = g;
  data.strategies = strategies::parse_strategy_types_csv(s.read(c.work / artifact::kStrategyTypes));
  const auto themes = s.read_optional(c.data / "themes.csv");
  if (themes) data.reports.themes = profiling::parse_themes_csv(*themes);
  if (const auto opinions = s.read_optional(c.data / "opinions.csv")) {
    data.reports.opinions = profiling::parse_opinions_csv(*opinions);
  }
  if (have_themes) *have_themes = themes.has_value();
  return data;
}

std::string opt_double(const std::optional<double>& v) { return v ? io::format_double(*v) : std::string(); }

std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

std::string edges_csv(const strategies::HeuristicNet& net, const std::vector<std::string>& codes) {
  io::CsvWriter w({"from", "to", "dependency", "frequency"});
  for (const auto& e : net.edges) {
    w.add_row({strategies::state_name(e.from, codes), strategies::state_name(e.to, codes), io::format_double(e.dependency),
               io::format_double(e.frequency)});
  }
  return w.str();
}

void write_graphs(Stage& s, const std::string& stem, const std::vector<const std::vector<std::size_t>*>& sequences,
                  const std::vector<std::string>& codes, bool with_fomm) {
  const auto title = fs::path(stem).filename().string();
  if (with_fomm) {
    const auto fomm = strategies::fomm_from_sequences(sequences, codes.size());
    s.write(stem + "_fomm.dot", strategies::fomm_to_dot(fomm.probabilities, codes, title + "_fomm"));
  }
  const auto net = strategies::heuristic_net(sequences, codes.size());
  s.write(stem + "_heuristic.dot", strategies::heuristic_net_to_dot(net, codes, title + "_heuristic"));
  s.write(stem + "_heuristic_edges.csv", edges_csv(net, codes));
}

// Names and risks per strategy type id, as the typing stage assigns them.
void type_labels(const Context& c, const io::CsvTable& summary, std::vector<std::string>& names,
                 std::vector<strategies::Risk>& risks) {
  const std::size_t count = c.config.k_pass + c.config.k_drop;
  names.assign(count, {});
  risks.assign(count, strategies::Risk::kLow);
  for (std::size_t i = 0; i < count; ++i) {
    names[i] = fmt::format("Type {}", i + 1);
    risks[i] = i < c.config.k_pass ? strategies::Risk::kLow : strategies::Risk::kHigh;
  }
  summary.require_columns({"type_id", "name"});
  for (std::size_t r = 0; r < summary.size(); ++r) {
    const auto id = io::parse_int(summary.at(r, "type_id"));
    if (id < 0 || static_cast<std::size_t>(id) >= count) {
      throw ValidationError(fmt::format("strategy type id {} outside the configured {} types", id, count));
    }
    names[static_cast<std::size_t>(id)] = summary.at(r, "name");
  }
}

// ------------------------------------------------------------------ stages

void stage_ingest(const Context& c) {
  Stage s("ingest", c);
  const auto raw = s.read(c.data / "raw.log");
  const auto course = load_course(s, c.data / "course.json");
  const auto r = ingest::ingest_raw_log(raw, c.rules, c.registry, course.calendar, c.config.merge_window);
  s.write(artifact::kTrace, ingest::format_trace_log(r.events));
  s.write(artifact::kIngestStats, dump({{"lines", r.stats.lines},
                                        {"irrelevant", r.stats.irrelevant},
                                        {"unregistered", r.stats.unregistered},
                                        {"merged", r.stats.merged},
                                        {"events", r.stats.events}}));
  s.finish(fmt::format("{} lines, {} events", r.stats.lines, r.stats.events));
}

void stage_sessionize(const Context& c) {
  Stage s("sessionize", c);
  const auto events = ingest::parse_trace_log(s.read(c.work / artifact::kTrace));
  const auto course = load_course(s, c.data / "course.json");
  if (!ingest::is_sorted_by_student_time(events)) throw ValidationError("trace log is not sorted by student and time");
  const auto r = pipeline::sessionize(events, course.calendar, c.registry, c.config.gap_cutoff);
  std::set<std::string> students;
  for (const auto& rec : r.records) students.insert(rec.student);
  s.write(artifact::kSessions, sessions::sessions_csv(r.records));
  s.write(artifact::kVectors, sessions::vectors_csv(r.vectors, c.registry));
  s.write(artifact::kSessionStats, dump({{"events", events.size()},
                                         {"sessions", r.records.size()},
                                         {"dropped_single_event", r.dropped_single_event},
                                         {"students", students.size()}}));
  s.finish(fmt::format("{} sessions ({} single-event sessions dropped)", r.records.size(), r.dropped_single_event));
}

void stage_tactics(const Context& c) {
  Stage s("tactics", c);
  const auto vectors = sessions::parse_vectors_csv(s.read(c.work / artifact::kVectors), c.registry);
  if (vectors.size() < c.config.k_sess) {
    throw ValidationError(fmt::format("{} sessions cannot form {} tactics", vectors.size(), c.config.k_sess));
  }
  auto cfg = clustering::ClusteringConfig::kmedoids(c.config.k_sess, c.config.seed);
  cfg.restarts = c.config.kmedoids_restarts;
  const auto det = tactics::detect_tactics(vectors, c.registry.codes(), cfg);
  s.write(artifact::kTactics, dump(tactics::tactics_to_json(det)));
  s.write(artifact::kSessionTactics, tactics::session_tactics_csv(det));
  s.write(artifact::kTacticTable, tactics::tactic_report_csv(det.tactics, c.registry.codes()));
  s.write(artifact::kTacticProportions, tactics::proportions_csv(det.tactics, c.registry.codes()));
  if (c.cvi) {
    std::vector<std::vector<double>> rows;
    for (const auto& v : vectors) rows.push_back(v.values);
    const auto data = clustering::DataMatrix::from_rows(rows);
    const clustering::DistanceMatrix distances(data);
    std::vector<clustering::CviInput> inputs;
    const std::size_t lo = c.config.k_sess > 4 ? c.config.k_sess - 2 : 2;
    for (std::size_t k = lo; k <= c.config.k_sess + 2 && k < vectors.size(); ++k) {
      if (k == c.config.k_sess) {
        inputs.push_back({k, det.session_tactics, std::nullopt});
        continue;
      }
      auto kc = clustering::ClusteringConfig::kmedoids(k, c.config.seed);
      kc.restarts = 1;  // scan only; the chosen k keeps its full-restart labels
      inputs.push_back({k, clustering::kmedoids_l1(data, distances, kc).labels, std::nullopt});
    }
    s.write(artifact::kTacticCvi, clustering::cvi_csv(clustering::cvi_report(data, distances, inputs)));
  }
  s.finish(fmt::format("{} tactics over {} sessions", det.tactics.size(), vectors.size()));
}

void stage_strategies(const Context& c) {
  Stage s("strategies", c);
  const auto records = sessions::parse_sessions_csv(s.read(c.work / artifact::kSessions));
  const auto labeled = tactics::parse_session_tactics_csv(s.read(c.work / artifact::kSessionTactics));
  const auto det = load_tactics(s, c);
  std::map<std::size_t, std::size_t> by_session;
  for (const auto& l : labeled) {
    if (l.tactic_id >= det.tactics.size()) throw ValidationError(fmt::format("unknown tactic id {}", l.tactic_id));
    by_session[l.session_id] = l.tactic_id;
  }
  std::vector<std::size_t> labels;
  for (const auto& r : records) {
    auto it = by_session.find(r.id);
    if (it == by_session.end()) throw ValidationError(fmt::format("session {} has no tactic label", r.id));
    labels.push_back(it->second);
  }
  const auto strats = pipeline::weekly_strategies(records, labels);
  const auto codes = tactic_codes(det);
  s.write(artifact::kSequences, strategies::sequences_csv(strats));
  s.clear(std::string(artifact::kGraphs) + "/fomm");
  for (const auto& st : strats) {
    const auto fomm = strategies::fomm_from_sequence(st.tactics, codes.size());
    s.write(artifact::strategy_fomm_path(st.student, st.week),
            strategies::fomm_to_dot(fomm.probabilities, codes, fmt::format("{}_w{:02}", st.student, st.week)));
  }
  s.finish(fmt::format("{} weekly strategies", strats.size()));
}

void stage_risk_train(const Context& c) {
  Stage s("risk-train", c);
  const auto h = c.history_dir();
  const auto subs = risk::parse_submissions_csv(s.read(h / "submissions.csv"));
  const auto grades = risk::parse_grades_csv(s.read(h / "grades.csv"));
  const auto course = load_course(s, fs::exists(h / "course.json") ? h / "course.json" : c.data / "course.json");
  const auto examples = risk::build_training_set(subs, grades, course);
  risk::TrainConfig tc;
  tc.seed = c.config.seed;
  const auto model = risk::train(examples, tc);
  s.write(artifact::kRiskModel, dump(model.to_json()));
  io::CsvWriter w({"week", "examples", "training_auc", "converged", "iterations", "gradient_norm"});
  double worst = 1.0;
  for (const auto& m : model.weeks) {
    w.add_row({std::to_string(m.week), std::to_string(m.examples), io::format_double(m.training_auc),
               m.converged ? "1" : "0", std::to_string(m.iterations), io::format_double(m.gradient_norm)});
    worst = std::min(worst, m.training_auc);
  }
  s.write("risk_training.csv", w.str());
  s.finish(fmt::format("{} weekly models from {} examples, lowest training AUC {:.3f}", model.weeks.size(),
                       examples.size(), worst));
}

void stage_risk_score(const Context& c) {
  Stage s("risk-score", c);
  const auto model_path = c.work / artifact::kRiskModel;
  const auto model = risk::RiskModel::from_json(parse_json(s.read(model_path), model_path));
  const auto subs = risk::parse_submissions_csv(s.read(c.data / "submissions.csv"));
  const auto course = load_course(s, c.data / "course.json");
  const auto strats = strategies::parse_sequences_csv(s.read(c.work / artifact::kSequences));
  std::set<std::string> students;
  for (const auto& st : strats) students.insert(st.student);
  const auto scores = risk::score_cohort(model, subs, {students.begin(), students.end()}, course);
  s.write(artifact::kRiskScores, risk::risk_scores_csv(scores));
  io::CsvWriter w({"student", "week", "p_drop", "step", "feature", "value", "contribution", "cumulative_logit"});
  for (const auto& sc : scores) {
    const auto e = risk::explain(model, sc.features, sc.week);
    const auto p = io::format_double(sc.p_drop), week = std::to_string(sc.week);
    double cumulative = e.baseline;
    w.add_row({sc.student, week, p, "0", "baseline", "", io::format_double(e.baseline), io::format_double(cumulative)});
    for (std::size_t i = 0; i < risk::kFeatureCount; ++i) {
      const auto j = e.order[i];
      cumulative += e.contributions[j];
      w.add_row({sc.student, week, p, std::to_string(i + 1), std::string(risk::kFeatureNames[j]),
                 io::format_double(e.features[j]), io::format_double(e.contributions[j]), io::format_double(cumulative)});
    }
  }
  s.write(artifact::kWaterfall, w.str());
  s.finish(fmt::format("{} student-weeks scored", scores.size()));
}

void stage_cluster_strategies(const Context& c) {
  using strategies::Risk;
  Stage s("cluster-strategies", c);
  auto strats = strategies::parse_sequences_csv(s.read(c.work / artifact::kSequences));
  pipeline::attach_scores(strats, risk::parse_risk_scores_csv(s.read(c.work / artifact::kRiskScores)));
  const auto det = load_tactics(s, c);
  const auto codes = tactic_codes(det);
  const std::size_t T = codes.size();
  const auto typing = pipeline::type_strategies(strats, T, codes, c.config);
  s.write(artifact::kStrategyTypes, strategies::strategy_types_csv(strats, typing.assignments));

  io::CsvWriter summary({"type_id", "risk", "name", "description", "count", "mean_p_drop", "median_p_drop"});
  std::vector<std::string> freq_header{"type_id", "name"};
  freq_header.insert(freq_header.end(), codes.begin(), codes.end());
  io::CsvWriter freq(freq_header);
  s.clear(artifact::kGraphs, "type_");
  std::size_t types = 0;
  for (const auto* pc : {&typing.low, &typing.high}) {
    for (const auto& t : pc->types) {
      std::vector<double> p;
      std::vector<const std::vector<std::size_t>*> seqs;
      for (const auto& a : pc->assignments) {
        if (a.type_id != t.type_id) continue;
        p.push_back(*strats[a.strategy].p_drop);
        seqs.push_back(&strats[a.strategy].tactics);
      }
      summary.add_row({std::to_string(t.type_id), strategies::to_string(t.risk), t.name, t.description,
                       std::to_string(t.count), io::format_double(t.mean_p_drop), opt_double(median(p))});
      std::vector<std::string> row{std::to_string(t.type_id), t.name};
      for (double f : t.mean_tactic_frequencies) row.push_back(io::format_double(f));
      freq.add_row(row);
      if (!seqs.empty()) write_graphs(s, artifact::type_graph_stem(t.type_id), seqs, codes, true);
      ++types;
    }
  }
  s.write(artifact::kStrategyTypeSummary, summary.str());
  s.write(artifact::kStrategyTypeTactics, freq.str());
  io::CsvWriter notes({"note"});
  for (const auto& n : typing.notes) notes.add_row({n});
  s.write(artifact::kStrategyNotes, notes.str());

  if (c.cvi) {
    io::CsvWriter cvi({"partition", "k", "silhouette", "davies_bouldin", "calinski_harabasz", "bic"});
    for (const auto& [members, pc, k_chosen, risk] :
         {std::tuple{&typing.partition.low, &typing.low, c.config.k_pass, Risk::kLow},
          std::tuple{&typing.partition.high, &typing.high, c.config.k_drop, Risk::kHigh}}) {
      const std::size_t n = members->size();
      if (n < 2) continue;
      const std::size_t dim = c.config.feature_mode == strategies::FeatureMode::kTransitions ? (T + 1) * (T + 1) : T;
      clustering::DataMatrix data(n, dim);
      for (std::size_t i = 0; i < n; ++i) {
        const auto f = strategies::strategy_features(strats[(*members)[i]], T, c.config.feature_mode);
        std::copy(f.begin(), f.end(), data.row(i).begin());
      }
      const clustering::DistanceMatrix distances(data);
      std::vector<clustering::CviInput> inputs;
      const std::size_t lo = k_chosen > 3 ? k_chosen - 2 : 1;
      for (std::size_t k = lo; k <= k_chosen + 2 && k < n; ++k) {
        if (k == k_chosen && pc->model) {
          std::vector<std::size_t> labels;
          for (const auto& a : pc->assignments) labels.push_back(a.cluster_index);
          inputs.push_back({k, labels, pc->model->bic});
          continue;
        }
        auto ec = clustering::ClusteringConfig::em(k, c.config.seed);
        ec.restarts = std::min<std::size_t>(c.config.em_restarts, 10);
        const auto g = clustering::gmm_em_diagonal(data, ec);
        inputs.push_back({k, g.assignment.labels, g.bic});
      }
      for (const auto& r : clustering::cvi_report(data, distances, inputs)) {
        cvi.add_row({strategies::to_string(risk), std::to_string(r.k), opt_double(r.silhouette),
                     opt_double(r.davies_bouldin), opt_double(r.calinski_harabasz), opt_double(r.bic)});
      }
    }
    s.write(artifact::kStrategyCvi, cvi.str());
  }
  s.finish(fmt::format("{} strategy types ({} low-risk and {} high-risk strategies)", types,
                       typing.partition.low.size(), typing.partition.high.size()));
}

void stage_profiles(const Context& c) {
  Stage s("profiles", c);
  bool have_themes = false;
  auto data = load_cohort(s, c, &have_themes);
  const auto summary = io::CsvTable::parse(s.read(c.work / artifact::kStrategyTypeSummary));
  std::vector<std::string> names;
  std::vector<strategies::Risk> risks;
  type_labels(c, summary, names, risks);
  const auto profiles = profiling::build_profiles(data.strategies, names.size());
  if (profiles.size() < c.config.k_student) {
    throw ValidationError(fmt::format("{} students cannot form {} profiles", profiles.size(), c.config.k_student));
  }
  const auto pc = profiling::cluster_profiles(profiles, c.config.k_student, names, risks, data);
  s.write(artifact::kProfiles, profiling::profiles_csv(profiles, names));

  std::map<std::string, const profiling::ProfileCluster*> of_student;
  for (const auto& cl : pc.clusters) {
    for (const auto& m : cl.members) of_student[m] = &cl;
  }
  io::CsvWriter members({"student", "cluster_index", "cluster_name"});
  for (const auto& [student, cl] : of_student) {
    members.add_row({student, std::to_string(cl->cluster_index), cl->display_name});
  }
  s.write(artifact::kProfileMembers, members.str());

  io::CsvWriter sum({"cluster_index", "name", "n_students", "median_task_pct", "median_exam_pct", "median_grade",
                     "mean_p_drop", "median_p_drop", "answerers", "opinion_negative", "opinion_neutral",
                     "opinion_positive", "opinion_absent"});
  io::CsvWriter themes({"cluster_index", "theme", "students"});
  for (const auto& cl : pc.clusters) {
    const auto& m = cl.summary;
    auto opinion = [&](const std::string& key) {
      auto it = m.opinions.find(key);
      return std::to_string(it == m.opinions.end() ? 0 : it->second);
    };
    sum.add_row({std::to_string(cl.cluster_index), cl.display_name, std::to_string(m.n_students),
                 opt_double(m.median_task_pct), opt_double(m.median_exam_pct), opt_double(m.median_grade),
                 opt_double(m.mean_p_drop), opt_double(m.median_p_drop), std::to_string(m.answerers),
                 opinion("negative"), opinion("neutral"), opinion("positive"), opinion("absent")});
    for (const auto& [theme, count] : m.majority_themes) {
      themes.add_row({std::to_string(cl.cluster_index), theme, std::to_string(count)});
    }
  }
  s.write(artifact::kProfileSummary, sum.str());
  if (have_themes) {
    s.write(artifact::kProfileThemes, themes.str());
  } else if (fs::exists(c.work / artifact::kProfileThemes)) {
    fs::remove(c.work / artifact::kProfileThemes);
  }

  std::vector<std::string> leaves;
  std::vector<std::vector<double>> rows;
  for (const auto& p : profiles) {
    leaves.push_back(p.student);
    rows.push_back(p.values);
  }
  s.write(artifact::kDendrogramSvg, pc.tree.to_svg(leaves));
  s.write(artifact::kDendrogramDot, pc.tree.to_dot(leaves));
  s.write(artifact::kDendrogramJson, dump(pc.tree.to_json(leaves)));
  if (c.cvi) {
    const auto matrix = clustering::DataMatrix::from_rows(rows);
    std::vector<clustering::CviInput> inputs;
    for (std::size_t k = 2; k <= 8 && k < profiles.size(); ++k) inputs.push_back({k, pc.tree.cut(k), std::nullopt});
    s.write(artifact::kProfileCvi, clustering::cvi_csv(clustering::cvi_report(matrix, inputs)));
  }

  const auto det = load_tactics(s, c);
  const auto codes = tactic_codes(det);
  const auto strats = strategies::parse_sequences_csv(s.read(c.work / artifact::kSequences));
  s.clear(artifact::kGraphs, "profile_");
  for (const auto& cl : pc.clusters) {
    const std::set<std::string> in(cl.members.begin(), cl.members.end());
    std::vector<const std::vector<std::size_t>*> seqs;
    for (const auto& st : strats) {
      if (in.count(st.student)) seqs.push_back(&st.tactics);
    }
    if (!seqs.empty()) write_graphs(s, artifact::profile_graph_stem(cl.cluster_index), seqs, codes, false);
  }
  std::string sizes;
  for (const auto& cl : pc.clusters) sizes += (sizes.empty() ? "" : ", ") + fmt::format("{} {}", cl.display_name, cl.members.size());
  s.finish(fmt::format("{} students in {} profiles ({})", profiles.size(), pc.clusters.size(), sizes));
}

void stage_stats(const Context& c) {
  Stage s("stats", c);
  const auto data = load_cohort(s, c, nullptr);
  const auto members = io::CsvTable::parse(s.read(c.work / artifact::kProfileMembers));
  members.require_columns({"student", "cluster_index", "cluster_name"});
  std::map<long long, std::pair<std::string, std::set<std::string>>> clusters;
  for (std::size_t r = 0; r < members.size(); ++r) {
    auto& cl = clusters[io::parse_int(members.at(r, "cluster_index"))];
    cl.first = members.at(r, "cluster_name");
    cl.second.insert(members.at(r, "student"));
  }
  profiling::CompareOptions opts;
  opts.test.resamples = c.config.resamples;
  opts.test.seed = c.config.seed;
  opts.permutation_below = c.config.permutation_below;
  opts.include_dropouts = c.config.include_dropouts;
  std::vector<profiling::Comparison> out;
  for (const auto& [index, cl] : clusters) {
    for (auto v : {profiling::Variable::kGrade, profiling::Variable::kPDrop, profiling::Variable::kOpinion}) {
      out.push_back(profiling::compare_cluster(cl.first, cl.second, v, data, opts));
    }
  }
  s.write(artifact::kComparisons, profiling::comparisons_csv(out));
  std::size_t significant = 0;
  for (const auto& cmp : out) significant += cmp.computable && cmp.result.p_value < 0.05;
  s.finish(fmt::format("{} comparisons, {} with p < .05", out.size(), significant));
}

void stage_report(const Context& c) {
  Stage s("report", c);
  auto count = [&](const char* name) { return io::CsvTable::parse(s.read(c.work / name)); };
  const auto sessions_t = count(artifact::kSessions);
  const auto types_t = count(artifact::kStrategyTypes);
  const auto members_t = count(artifact::kProfileMembers);
  const auto tactics_t = count(artifact::kTacticTable);
  const auto summary_t = count(artifact::kStrategyTypeSummary);
  const auto profiles_t = count(artifact::kProfileSummary);
  std::size_t low = 0, high = 0;
  for (std::size_t r = 0; r < types_t.size(); ++r) (types_t.at(r, "risk") == "low" ? low : high) += 1;
  io::CsvWriter run({"metric", "value"});
  run.add_row({"students", std::to_string(members_t.size())});
  run.add_row({"sessions", std::to_string(sessions_t.size())});
  run.add_row({"tactics", std::to_string(tactics_t.size())});
  run.add_row({"weekly strategies", std::to_string(types_t.size())});
  run.add_row({"low-risk strategies", std::to_string(low)});
  run.add_row({"high-risk strategies", std::to_string(high)});
  run.add_row({"strategy types", std::to_string(summary_t.size())});
  run.add_row({"profile clusters", std::to_string(profiles_t.size())});
  run.add_row({"seed", std::to_string(c.config.seed)});
  s.write(artifact::kRunSummary, run.str());

  const auto bundle = c.work / artifact::kReport;
  const auto files = report::emit_report(c.work, bundle, {c.title});
  for (const auto& f : files) s.record_output(std::string(artifact::kReport) + "/" + f);
  const auto issues = report::check_links(bundle);
  if (!issues.empty()) {
    std::string list;
    for (const auto& i : issues) list += fmt::format("\n  {} -> {}", i.page, i.target);
    throw Error(fmt::format("report bundle has {} dangling references:{}", issues.size(), list));
  }
  s.finish(fmt::format("{} files in {}", files.size(), bundle.generic_string()));
}

void stage_synth(const Context& c) {
  Stage s("synth", c, c.data);
  auto spec = synth::ArchetypeSpec::default_spec();
  if (c.synth_spec) spec = synth::ArchetypeSpec::from_json(parse_json(s.read(*c.synth_spec), *c.synth_spec));
  if (c.seed_given || !c.synth_spec) spec.seed = c.config.seed;
  spec.validate(c.registry, c.rules);
  const auto cohort = synth::generate(spec, c.rules);
  for (const auto& [name, content] : synth::cohort_files(cohort)) s.write(name, content);
  const auto history = synth::generate(synth::history_spec(spec, spec.seed + 1000), c.rules);
  for (const auto& [name, content] : synth::cohort_files(history)) s.write("history/" + name, content);
  s.finish(fmt::format("{} students, {} raw log lines, history cohort seed {}", cohort.students().size(),
                       std::count(cohort.raw_log.begin(), cohort.raw_log.end(), '\n'), spec.seed + 1000));
}

void stage_model_copy(const Context& c) {
  Stage s("risk-train", c);
  const auto text = s.read(*c.model);
  risk::RiskModel::from_json(parse_json(text, *c.model));
  s.write(artifact::kRiskModel, text);
  s.finish(fmt::format("model taken from {}", c.model->generic_string()));
}

void stage_pipeline(const Context& c) {
  if (c.synth_first) stage_synth(c);
  stage_ingest(c);
  stage_sessionize(c);
  stage_tactics(c);
  stage_strategies(c);
  if (c.model) {
    stage_model_copy(c);
  } else {
    stage_risk_train(c);
  }
  stage_risk_score(c);
  stage_cluster_strategies(c);
  stage_profiles(c);
  stage_stats(c);
  stage_report(c);
  const std::vector<std::string> stages{"ingest",         "sessionize",         "tactics",  "strategies",
                                        "risk-train",     "risk-score",         "cluster-strategies",
                                        "profiles",       "stats",              "report"};
  json run = {{"tool", "srltrace"},
              {"version", std::string(kVersion)},
              {"libraries",
               {{"fmt", fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100)},
                {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                              NLOHMANN_JSON_VERSION_PATCH)},
                {"cli11", CLI11_VERSION}}},
              {"config", c.config.to_json()},
              {"seeds", {{"pipeline", c.config.seed}}},
              {"stages", json::array()}};
  for (const auto& name : stages) {
    run["stages"].push_back(parse_json(io::read_file(c.work / "manifests" / (name + ".json")), name));
  }
  io::write_file_atomic(c.work / "manifest.json", dump(run));
  *c.out << "pipeline: manifest written to " << (c.work / "manifest.json").generic_string() << "\n";
}

// Applies a config file: path and report keys here, the rest to PipelineConfig.
void apply_config_file(Context& c, const fs::path& path) {
  auto doc = parse_json(io::read_file(path), path);
  if (!doc.is_object()) throw ValidationError(fmt::format("{}: config must be a JSON object", path.string()));
  try {
    if (doc.contains("data")) c.data = doc["data"].get<std::string>();
    if (doc.contains("work")) c.work = doc["work"].get<std::string>();
    if (doc.contains("history")) c.history = doc["history"].get<std::string>();
    if (doc.contains("model")) c.model = doc["model"].get<std::string>();
    if (doc.contains("report_title")) c.title = doc["report_title"].get<std::string>();
    if (doc.contains("cvi")) c.cvi = doc["cvi"].get<bool>();
  } catch (const json::exception& ex) {
    throw ValidationError(fmt::format("{}: {}", path.string(), ex.what()));
  }
  if (doc.contains("seed")) c.seed_given = true;
  for (const char* key : {"data", "work", "history", "model", "report_title", "cvi"}) doc.erase(key);
  c.config = pipeline::PipelineConfig::from_json(doc, c.config);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context c;
  c.out = &out;
  CLI::App app{"Trace-log analysis of self-regulated learning: tactics, strategies, dropout risk and profiles",
               "srltrace"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();

  std::string data, work, history, model, config_file, rules_file, registry_file, synth_spec, feature_mode;
  double gap = 0, merge = 0, threshold = 0;
  std::uint64_t seed = 0;
  std::size_t k_sess = 0, k_pass = 0, k_drop = 0, k_student = 0, em_restarts = 0, km_restarts = 0, resamples = 0,
              perm_below = 0;
  bool include_dropouts = true, no_cvi = false;

  app.add_option("--data", data, "Input data directory (raw.log, course.json, submissions.csv, grades.csv, ...)");
  app.add_option("--work", work, "Artifact directory (default: run)");
  app.add_option("--history", history, "Training history directory (default: <data>/history)");
  app.add_option("--model", model, "Use this risk model instead of training one (pipeline)");
  app.add_option("--config", config_file, "JSON config; its values override flags");
  app.add_option("--rules", rules_file, "Action-to-code rule table (JSON)");
  app.add_option("--registry", registry_file, "Event-code registry (JSON)");
  auto* o_seed = app.add_option("--seed", seed, "Seed for every randomized stage (default 42)");
  auto* o_gap = app.add_option("--gap-cutoff", gap, "Session gap cutoff in minutes (default 25)");
  auto* o_merge = app.add_option("--merge-window", merge, "Merge window for repeated events in seconds (default 60)");
  auto* o_ksess = app.add_option("--k-sess", k_sess, "Number of tactics (default 12)");
  auto* o_kpass = app.add_option("--k-pass", k_pass, "Low-risk strategy types (default 3)");
  auto* o_kdrop = app.add_option("--k-drop", k_drop, "High-risk strategy types (default 9)");
  auto* o_kstud = app.add_option("--k-student", k_student, "Profile clusters (default 5)");
  auto* o_thr = app.add_option("--risk-threshold", threshold, "High risk when p_drop exceeds this (default 0.5)");
  auto* o_mode = app.add_option("--feature-mode", feature_mode, "Strategy features: transitions or frequencies");
  auto* o_em = app.add_option("--em-restarts", em_restarts, "EM restarts per strategy partition (default 50)");
  auto* o_km = app.add_option("--kmedoids-restarts", km_restarts, "k-medoids restarts (default 5)");
  auto* o_res = app.add_option("--resamples", resamples, "Permutation resamples (default 10000)");
  auto* o_perm = app.add_option("--permutation-below", perm_below,
                                "Use the permutation test when a side has at most this many observations (default 5)");
  auto* o_incl = app.add_option("--include-dropouts", include_dropouts,
                                "Keep dropouts' grade-0 records in the comparison pool (default true)");
  app.add_flag("--no-cvi", no_cvi, "Skip the cluster validity index scans");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"ingest", "Recode the raw log into the trace log"},
      {"sessionize", "Split the trace log into sessions and frequency vectors"},
      {"tactics", "Cluster sessions into learning tactics (k-medoids)"},
      {"strategies", "Build weekly tactic sequences and their transition graphs"},
      {"risk-train", "Train the weekly dropout models on the history cohort"},
      {"risk-score", "Score every student-week and explain the scores"},
      {"cluster-strategies", "Partition strategies by risk and cluster each partition (EM)"},
      {"profiles", "Cluster students by strategy-type usage (complete linkage)"},
      {"stats", "Compare each profile with the other students (Brunner-Munzel)"},
      {"synth", "Generate a synthetic cohort with ground truth into --data"},
      {"report", "Render the static report bundle"},
      {"pipeline", "Run every stage in order"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) subs[name] = app.add_subcommand(name, help);
  subs["synth"]->add_option("--spec", synth_spec, "Archetype spec (JSON); default built-in");
  subs["pipeline"]->add_flag("--synth", c.synth_first, "Generate the synthetic cohort into --data first");
  subs["pipeline"]->add_option("--spec", synth_spec, "Archetype spec for --synth");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << "srltrace " << kVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return kValidation;
  }

  try {
    if (!data.empty()) c.data = data;
    if (!work.empty()) c.work = work;
    if (!history.empty()) c.history = history;
    if (!model.empty()) c.model = model;
    if (!synth_spec.empty()) c.synth_spec = synth_spec;
    c.cvi = !no_cvi;
    json flags = json::object();
    if (*o_seed) flags["seed"] = seed;
    if (*o_gap) flags["gap_cutoff_minutes"] = gap;
    if (*o_merge) flags["merge_window_seconds"] = merge;
    if (*o_ksess) flags["k_sess"] = k_sess;
    if (*o_kpass) flags["k_pass"] = k_pass;
    if (*o_kdrop) flags["k_drop"] = k_drop;
    if (*o_kstud) flags["k_student"] = k_student;
    if (*o_thr) flags["risk_threshold"] = threshold;
    if (*o_mode) flags["feature_mode"] = feature_mode;
    if (*o_em) flags["em_restarts"] = em_restarts;
    if (*o_km) flags["kmedoids_restarts"] = km_restarts;
    if (*o_res) flags["resamples"] = resamples;
    if (*o_perm) flags["permutation_below"] = perm_below;
    if (*o_incl) flags["include_dropouts"] = include_dropouts;
    c.seed_given = o_seed->count() > 0;
    c.config = pipeline::PipelineConfig::from_json(flags);
    if (!config_file.empty()) apply_config_file(c, config_file);
    if (!registry_file.empty()) {
      c.registry = ingest::EventCodeRegistry::from_json(parse_json(io::read_file(registry_file), registry_file));
    }
    if (!rules_file.empty()) c.rules = ingest::RuleTable::from_json(parse_json(io::read_file(rules_file), rules_file));
    c.rules.validate(c.registry);

    const std::map<std::string, void (*)(const Context&)> handlers{
        {"ingest", stage_ingest},
        {"sessionize", stage_sessionize},
        {"tactics", stage_tactics},
        {"strategies", stage_strategies},
        {"risk-train", stage_risk_train},
        {"risk-score", stage_risk_score},
        {"cluster-strategies", stage_cluster_strategies},
        {"profiles", stage_profiles},
        {"stats", stage_stats},
        {"synth", stage_synth},
        {"report", stage_report},
        {"pipeline", stage_pipeline},
    };
    for (const auto& [name, sub] : subs) {
      if (sub->parsed()) handlers.at(name)(c);
    }
    return kOk;
  } catch (const MissingInputError& ex) {
    err << "error: " << ex.what() << "\n";
    return kMissingInput;
  } catch (const ValidationError& ex) {
    err << "error: " << ex.what() << "\n";
    return kValidation;
  } catch (const std::exception& ex) {
    err << "internal error: " << ex.what() << "\n";
    return kInternal;
  }
}

}  // namespace srl::cli
