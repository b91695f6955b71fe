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

#include "srl/strategies.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include <fmt/core.h>

#include "srl/io.hpp"

namespace srl::strategies {

std::vector<WeeklyStrategy> weekly_sequences(std::vector<LabeledSession> sessions) {
  std::sort(sessions.begin(), sessions.end(), [](const LabeledSession& a, const LabeledSession& b) {
    return std::tie(a.student, a.week, a.start, a.session_id) < std::tie(b.student, b.week, b.start, b.session_id);
  });
  std::vector<WeeklyStrategy> out;
  for (const auto& s : sessions) {
    if (out.empty() || out.back().student != s.student || out.back().week != s.week) {
      out.push_back({s.student, s.week, {}, {}, std::nullopt});
    }
    out.back().tactics.push_back(s.tactic);
    out.back().session_ids.push_back(s.session_id);
  }
  return out;
}

double TransitionMatrix::row_sum(std::size_t row) const {
  double s = 0;
  for (std::size_t c = 0; c < dim(); ++c) s += (*this)(row, c);
  return s;
}

namespace {

void add_bigrams(TransitionMatrix& counts, const std::vector<std::size_t>& seq) {
  const std::size_t t = counts.tactic_count();
  if (seq.empty()) throw ValidationError("cannot build a transition model from an empty sequence");
  std::size_t row = TransitionMatrix::start_row();
  for (auto tactic : seq) {
    if (tactic >= t) throw ValidationError(fmt::format("tactic {} out of range for {} tactics", tactic, t));
    counts(row, tactic) += 1;
    row = TransitionMatrix::tactic_row(tactic);
  }
  counts(row, counts.end_col()) += 1;
}

Fomm normalize(TransitionMatrix counts) {
  Fomm f{counts, TransitionMatrix(counts.tactic_count())};
  for (std::size_t r = 0; r < counts.dim(); ++r) {
    const double total = counts.row_sum(r);
    if (total <= 0) continue;
    for (std::size_t c = 0; c < counts.dim(); ++c) f.probabilities(r, c) = counts(r, c) / total;
  }
  return f;
}

std::vector<double> mean_frequencies(const std::vector<WeeklyStrategy>& strategies,
                                     const std::vector<std::size_t>& members, std::size_t tactic_count) {
  std::vector<double> mean(tactic_count, 0.0);
  for (auto i : members) {
    const auto f = tactic_frequencies(strategies[i].tactics, tactic_count);
    for (std::size_t t = 0; t < tactic_count; ++t) mean[t] += f[t];
  }
  if (!members.empty()) {
    for (auto& m : mean) m /= static_cast<double>(members.size());
  }
  return mean;
}

}  // namespace

Fomm fomm_from_sequence(const std::vector<std::size_t>& sequence, std::size_t tactic_count) {
  TransitionMatrix counts(tactic_count);
  add_bigrams(counts, sequence);
  return normalize(std::move(counts));
}

Fomm fomm_from_sequences(const std::vector<const std::vector<std::size_t>*>& sequences, std::size_t tactic_count) {
  TransitionMatrix counts(tactic_count);
  for (const auto* seq : sequences) add_bigrams(counts, *seq);
  return normalize(std::move(counts));
}

std::vector<double> flatten(const TransitionMatrix& m) { return m.values(); }

TransitionMatrix unflatten(const std::vector<double>& values, std::size_t tactic_count) {
  TransitionMatrix m(tactic_count);
  if (values.size() != m.values().size()) {
    throw ValidationError(fmt::format("expected {} transition values, got {}", m.values().size(), values.size()));
  }
  for (std::size_t r = 0; r < m.dim(); ++r)
    for (std::size_t c = 0; c < m.dim(); ++c) m(r, c) = values[r * m.dim() + c];
  return m;
}

std::vector<double> tactic_frequencies(const std::vector<std::size_t>& sequence, std::size_t tactic_count) {
  std::vector<double> f(tactic_count, 0.0);
  for (auto t : sequence) {
    if (t >= tactic_count) throw ValidationError(fmt::format("tactic {} out of range", t));
    f[t] += 1.0;
  }
  for (auto& v : f) v /= static_cast<double>(std::max<std::size_t>(sequence.size(), 1));
  return f;
}

FeatureMode parse_feature_mode(std::string_view text) {
  if (text == "transitions") return FeatureMode::kTransitions;
  if (text == "tactic-frequencies") return FeatureMode::kTacticFrequencies;
  throw ValidationError(fmt::format("unknown feature mode '{}' (transitions|tactic-frequencies)", text));
}

std::string to_string(FeatureMode mode) {
  return mode == FeatureMode::kTransitions ? "transitions" : "tactic-frequencies";
}

std::vector<double> strategy_features(const WeeklyStrategy& s, std::size_t tactic_count, FeatureMode mode) {
  if (mode == FeatureMode::kTacticFrequencies) return tactic_frequencies(s.tactics, tactic_count);
  return flatten(fomm_from_sequence(s.tactics, tactic_count).probabilities);
}

std::string to_string(Risk risk) { return risk == Risk::kLow ? "low" : "high"; }

Risk parse_risk(std::string_view text) {
  if (text == "low") return Risk::kLow;
  if (text == "high") return Risk::kHigh;
  throw ValidationError(fmt::format("unknown risk partition '{}'", text));
}

RiskPartition partition_by_risk(const std::vector<WeeklyStrategy>& strategies, double threshold) {
  RiskPartition out;
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    const auto& p = strategies[i].p_drop;
    if (!p) {
      throw ValidationError(
          fmt::format("strategy of {} in week {} has no dropout score", strategies[i].student, strategies[i].week));
    }
    (*p <= threshold ? out.low : out.high).push_back(i);
  }
  return out;
}

StrategyCatalog StrategyCatalog::default_catalog() {
  StrategyCatalog c;
  c.types = {
      {"Task-oriented, focused on performance", Risk::kLow,
       "Invests significant time in mandatory and basic tasks, ensuring the weekly goal is finished.",
       {{"F_CurTasks_Core_Correct", 1}, {"F_CurTasks_Basic_Correct", 1}, {"F_CurTasks_Intro", 0.5}}},
      {"Seeking understanding", Risk::kLow,
       "Gains understanding through lecture materials and supplementary resources before and during tasks.",
       {{"F_Lec_Engaged", 1}, {"F_CurTasks_Extra", 1}, {"F_CurTasks_Basic_Correct", 0.3}}},
      {"Resource-focused, more time on materials than tasks", Risk::kLow,
       "Works through course materials first, attends lectures and reviews model answers.",
       {{"F_CourseMat_Examples", 1}, {"F_Lec_Video", 0.7}, {"F_PrevTasks_Deep", 0.7}}},
      {"Falling behind, realizing struggle too late", Risk::kHigh,
       "Views previous weeks' model answers without engaging in current tasks.",
       {{"F_PrevTasks_Basic", 1}, {"F_CurTasks_Basic_Attempt", 0.5}}},
      {"Attempting with examples", Risk::kHigh,
       "Relies on examples to attempt tasks, experimenting with different tactics.",
       {{"F_CourseMat_Examples", 1}, {"F_CurTasks_Core_Attempt", 0.7}}},
      {"Low engagement", Risk::kHigh, "Relies solely on lectures, completing few tasks.",
       {{"F_Lec_Engaged", 1}, {"F_CurTasks_Intro", 0.3}}},
      {"Late reliance on model answers", Risk::kHigh,
       "Catches up by viewing previous weeks' model answers retroactively.",
       {{"F_PrevTasks_Deep", 1}, {"F_CurTasks_Intro", 0.3}}},
      {"Slow start, finding study pace", Risk::kHigh,
       "Completes few random tasks despite using a variety of materials.",
       {{"F_CurTasks_Intro", 1}, {"F_Lec_Video", 0.5}, {"F_CourseMat_Examples", 0.3}}},
      {"Struggling to understand, needing help", Risk::kHigh,
       "Searches course materials to understand but completes fewer tasks.",
       {{"F_CurTasks_Core_Attempt", 1}, {"F_Lec_Engaged", 0.5}, {"F_CurTasks_Basic_Attempt", 0.5}}},
      {"Superficial review, stuck on a single resource", Risk::kHigh,
       "Mostly watches videos without other materials or task completion.", {{"F_Lec_Video", 1}}},
      {"Browsing materials with sporadic task attempts", Risk::kHigh,
       "Focuses on supplementary materials with random task attempts.",
       {{"F_CurTasks_Extra", 1}, {"F_CurTasks_Basic_Attempt", 0.7}}},
      {"Risky focus on mandatory tasks only", Risk::kHigh,
       "Concentrates solely on mandatory tasks or one-to-one supervision sessions.",
       {{"TA_Sess", 1}, {"F_CurTasks_Core_Correct", 0.5}}},
  };
  return c;
}

StrategyCatalog StrategyCatalog::from_json(const nlohmann::json& doc) {
  StrategyCatalog c;
  try {
    for (const auto& e : doc.at("types")) {
      StrategyTypeInfo t;
      t.name = e.at("name").get<std::string>();
      t.risk = parse_risk(e.at("risk").get<std::string>());
      t.description = e.value("description", "");
      const auto signature = e.value("signature", nlohmann::json::object());
      for (const auto& [code, w] : signature.items()) {
        t.signature.emplace_back(code, w.get<double>());
      }
      c.types.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(fmt::format("invalid strategy catalog: {}", ex.what()));
  }
  return c;
}

nlohmann::json StrategyCatalog::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : types) {
    nlohmann::json sig = nlohmann::json::object();
    for (const auto& [code, w] : t.signature) sig[code] = w;
    arr.push_back({{"name", t.name}, {"risk", to_string(t.risk)}, {"description", t.description}, {"signature", sig}});
  }
  return {{"types", arr}};
}

std::vector<const StrategyTypeInfo*> StrategyCatalog::of_risk(Risk risk) const {
  std::vector<const StrategyTypeInfo*> out;
  for (const auto& t : types) {
    if (t.risk == risk) out.push_back(&t);
  }
  return out;
}

PartitionClustering cluster_strategy_types(const std::vector<WeeklyStrategy>& strategies,
                                           const std::vector<std::size_t>& partition, Risk risk,
                                           const clustering::ClusteringConfig& config, std::size_t tactic_count,
                                           FeatureMode mode, const std::vector<std::string>& tactic_codes,
                                           const StrategyCatalog& catalog, std::size_t type_offset) {
  config.validate();
  const std::size_t n = partition.size(), k = config.k;
  if (n == 0) throw ValidationError(fmt::format("{}-risk partition is empty", to_string(risk)));
  if (n < k) {
    throw ValidationError(fmt::format("{}-risk partition has {} strategies, fewer than k={}", to_string(risk), n, k));
  }
  PartitionClustering out;
  std::vector<std::size_t> labels(n);
  if (k == n) {
    std::iota(labels.begin(), labels.end(), 0);
  } else {
    const std::size_t dim = mode == FeatureMode::kTransitions ? (tactic_count + 1) * (tactic_count + 1) : tactic_count;
    clustering::DataMatrix data(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
      const auto f = strategy_features(strategies.at(partition[i]), tactic_count, mode);
      std::copy(f.begin(), f.end(), data.row(i).begin());
    }
    out.model = clustering::gmm_em_diagonal(data, config);
    labels = out.model->assignment.labels;
  }
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(partition[i]);
  std::vector<std::vector<double>> freq(k);
  std::vector<double> mean_p(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    freq[c] = mean_frequencies(strategies, members[c], tactic_count);
    for (auto i : members[c]) mean_p[c] += *strategies[i].p_drop;
    if (!members[c].empty()) mean_p[c] /= static_cast<double>(members[c].size());
  }
  // Name clusters and fix their order: catalog order when names match.
  std::vector<std::size_t> rank(k);
  std::iota(rank.begin(), rank.end(), 0);
  std::vector<std::string> names(k), descriptions(k);
  const auto entries = catalog.of_risk(risk);
  if (entries.size() == k && k > 0) {
    std::map<std::string, std::size_t> tactic_index;
    for (std::size_t t = 0; t < tactic_codes.size(); ++t) tactic_index[tactic_codes[t]] = t;
    std::vector<std::vector<double>> score(k, std::vector<double>(k, 0.0));
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t e = 0; e < k; ++e) {
        for (const auto& [code, w] : entries[e]->signature) {
          auto it = tactic_index.find(code);
          if (it != tactic_index.end() && it->second < tactic_count) score[c][e] += w * freq[c][it->second];
        }
      }
    }
    std::vector<bool> used_c(k, false), used_e(k, false);
    for (std::size_t step = 0; step < k; ++step) {
      std::size_t bc = 0, be = 0;
      double best = -1e300;
      for (std::size_t c = 0; c < k; ++c) {
        if (used_c[c] || members[c].empty()) continue;
        for (std::size_t e = 0; e < k; ++e) {
          if (!used_e[e] && score[c][e] > best) {
            best = score[c][e];
            bc = c;
            be = e;
          }
        }
      }
      if (best == -1e300) {
        // Remaining clusters are empty; hand out the leftover names in order.
        for (std::size_t c = 0; c < k; ++c) {
          if (used_c[c]) continue;
          be = static_cast<std::size_t>(std::find(used_e.begin(), used_e.end(), false) - used_e.begin());
          bc = c;
          break;
        }
      }
      used_c[bc] = used_e[be] = true;
      rank[bc] = be;
      names[bc] = entries[be]->name;
      descriptions[bc] = entries[be]->description;
    }
  } else {
    for (std::size_t c = 0; c < k; ++c) {
      names[c] = fmt::format("{}-risk type {}", risk == Risk::kLow ? "Low" : "High", c + 1);
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    StrategyTypeSummary s;
    s.type_id = type_offset + rank[c];
    s.risk = risk;
    s.name = names[c];
    s.description = descriptions[c];
    s.count = members[c].size();
    s.mean_p_drop = mean_p[c];
    s.mean_tactic_frequencies = freq[c];
    out.types.push_back(std::move(s));
  }
  std::sort(out.types.begin(), out.types.end(), [](const auto& a, const auto& b) { return a.type_id < b.type_id; });
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = labels[i];
    out.assignments.push_back({partition[i], risk, rank[c], type_offset + rank[c], names[c], mean_p[c]});
  }
  return out;
}

double dependency_measure(double ab, double ba) { return (ab - ba) / (ab + ba + 1.0); }

double self_loop_dependency(double aa) { return aa / (aa + 1.0); }

HeuristicNet heuristic_net(const std::vector<const std::vector<std::size_t>*>& sequences, std::size_t tactic_count,
                           double dependency_threshold, double frequency_threshold) {
  if (sequences.empty()) throw ValidationError("heuristic net needs at least one sequence");
  const std::size_t states = tactic_count + 2;
  const std::size_t end = tactic_count + 1;
  std::vector<std::vector<double>> follows(states, std::vector<double>(states, 0.0));
  HeuristicNet net;
  net.tactic_count = tactic_count;
  net.dependency_threshold = dependency_threshold;
  net.frequency_threshold = frequency_threshold;
  net.node_frequency.assign(states, 0.0);
  for (const auto* seq : sequences) {
    if (seq->empty()) throw ValidationError("heuristic net input contains an empty sequence");
    std::size_t prev = 0;
    net.node_frequency[0] += 1;
    for (auto t : *seq) {
      if (t >= tactic_count) throw ValidationError(fmt::format("tactic {} out of range", t));
      follows[prev][t + 1] += 1;
      net.node_frequency[t + 1] += 1;
      prev = t + 1;
    }
    follows[prev][end] += 1;
    net.node_frequency[end] += 1;
  }
  for (const auto& row : follows)
    for (double v : row) net.total_transitions += v;
  for (std::size_t a = 0; a < states; ++a) {
    for (std::size_t b = 0; b < states; ++b) {
      const double ab = follows[a][b];
      if (ab <= 0) continue;
      const double dep = a == b ? self_loop_dependency(ab) : dependency_measure(ab, follows[b][a]);
      const double rel = ab / net.total_transitions;
      if (dep >= dependency_threshold && rel >= frequency_threshold) net.edges.push_back({a, b, dep, ab});
    }
  }
  return net;
}

std::string state_name(std::size_t state, const std::vector<std::string>& tactic_codes) {
  if (state == 0) return "START";
  if (state == tactic_codes.size() + 1) return "END";
  return tactic_codes.at(state - 1);
}

std::string fomm_to_dot(const TransitionMatrix& p, const std::vector<std::string>& tactic_codes,
                        const std::string& title) {
  if (tactic_codes.size() != p.tactic_count()) throw ValidationError("tactic name count does not match matrix");
  std::string out = fmt::format("digraph \"{}\" {{\n  rankdir=LR;\n  node [shape=box, fontsize=10];\n", title);
  out += "  START [shape=circle];\n  END [shape=doublecircle];\n";
  for (std::size_t r = 0; r < p.dim(); ++r) {
    const std::string from = r == 0 ? "START" : tactic_codes[r - 1];
    for (std::size_t c = 0; c < p.dim(); ++c) {
      if (p(r, c) <= 0) continue;
      const std::string to = c == p.end_col() ? "END" : tactic_codes[c];
      out += fmt::format("  \"{}\" -> \"{}\" [label=\"{:.2f}\", penwidth={:.2f}];\n", from, to, p(r, c),
                         0.5 + 3.0 * p(r, c));
    }
  }
  out += "}\n";
  return out;
}

std::string heuristic_net_to_dot(const HeuristicNet& net, const std::vector<std::string>& tactic_codes,
                                 const std::string& title) {
  std::string out = fmt::format("digraph \"{}\" {{\n  rankdir=LR;\n  node [shape=box, fontsize=10];\n", title);
  for (std::size_t s = 0; s < net.node_frequency.size(); ++s) {
    if (net.node_frequency[s] <= 0) continue;
    out += fmt::format("  \"{}\" [label=\"{} ({})\"];\n", state_name(s, tactic_codes), state_name(s, tactic_codes),
                       net.node_frequency[s]);
  }
  for (const auto& e : net.edges) {
    out += fmt::format("  \"{}\" -> \"{}\" [label=\"{:.2f} ({})\"];\n", state_name(e.from, tactic_codes),
                       state_name(e.to, tactic_codes), e.dependency, e.frequency);
  }
  out += "}\n";
  return out;
}

std::string strategy_types_csv(const std::vector<WeeklyStrategy>& strategies,
                               const std::vector<StrategyTypeAssignment>& assignments) {
  io::CsvWriter w({"student", "week", "risk", "type_id", "type_name", "p_drop"});
  std::vector<const StrategyTypeAssignment*> sorted;
  for (const auto& a : assignments) sorted.push_back(&a);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->strategy < b->strategy; });
  for (const auto* a : sorted) {
    const auto& s = strategies.at(a->strategy);
    w.add_row({s.student, std::to_string(s.week), to_string(a->risk), std::to_string(a->type_id), a->display_name,
               s.p_drop ? io::format_double(*s.p_drop) : std::string()});
  }
  return w.str();
}

std::vector<StrategyTypeRow> parse_strategy_types_csv(std::string_view text) {
  const auto table = io::CsvTable::parse(text);
  table.require_columns({"student", "week", "risk", "type_id", "type_name", "p_drop"});
  std::vector<StrategyTypeRow> out;
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    StrategyTypeRow row;
    row.student = table.at(r, "student");
    row.week = static_cast<int>(io::parse_int(table.at(r, "week")));
    row.risk = parse_risk(table.at(r, "risk"));
    row.type_id = static_cast<std::size_t>(io::parse_int(table.at(r, "type_id")));
    row.type_name = table.at(r, "type_name");
    row.p_drop = io::parse_double(table.at(r, "p_drop"));
    out.push_back(std::move(row));
  }
  return out;
}

std::string sequences_csv(const std::vector<WeeklyStrategy>& strategies) {
  io::CsvWriter w({"student", "week", "session_ids", "tactics", "p_drop"});
  for (const auto& s : strategies) {
    std::string ids, tactics;
    for (std::size_t i = 0; i < s.tactics.size(); ++i) {
      if (i) {
        ids += ' ';
        tactics += ' ';
      }
      ids += std::to_string(s.session_ids.at(i));
      tactics += std::to_string(s.tactics[i]);
    }
    w.add_row({s.student, std::to_string(s.week), ids, tactics, s.p_drop ? io::format_double(*s.p_drop) : ""});
  }
  return w.str();
}

std::vector<WeeklyStrategy> parse_sequences_csv(std::string_view text) {
  const auto table = io::CsvTable::parse(text);
  table.require_columns({"student", "week", "session_ids", "tactics", "p_drop"});
  auto split = [](const std::string& field) {
    std::vector<std::size_t> out;
    std::istringstream in(field);
    std::string tok;
    while (in >> tok) out.push_back(static_cast<std::size_t>(io::parse_int(tok)));
    return out;
  };
  std::vector<WeeklyStrategy> out;
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    WeeklyStrategy s;
    s.student = table.at(r, "student");
    s.week = static_cast<int>(io::parse_int(table.at(r, "week")));
    s.session_ids = split(table.at(r, "session_ids"));
    s.tactics = split(table.at(r, "tactics"));
    if (s.tactics.size() != s.session_ids.size()) {
      throw ValidationError(fmt::format("sequence row {} has mismatched session and tactic lists", r + 1));
    }
    const auto& p = table.at(r, "p_drop");
    if (!p.empty()) s.p_drop = io::parse_double(p);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace srl::strategies
