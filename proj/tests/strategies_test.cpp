#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "srl/clustering.hpp"
#include "srl/strategies.hpp"

using namespace srl;
using namespace srl::strategies;

namespace {

Timestamp at_minute(long m) { return Timestamp{std::chrono::minutes(m)}; }

std::vector<std::string> tactic_names(std::size_t t) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < t; ++i) out.push_back("T" + std::to_string(i));
  return out;
}

// Sequence from a Markov chain given as start weights and a transition table
// whose last column is the stop weight.
std::vector<std::size_t> walk(Rng& rng, const std::vector<double>& start, const std::vector<std::vector<double>>& next) {
  std::vector<std::size_t> seq{rng.categorical(start)};
  while (seq.size() < 30) {
    const auto& row = next[seq.back()];
    const std::size_t s = rng.categorical(row);
    if (s == row.size() - 1) break;
    seq.push_back(s);
  }
  return seq;
}

}  // namespace

TEST_CASE("weekly sequences group by student and week in time order") {
  std::vector<LabeledSession> s{{1, "a", 1, at_minute(50), 3}, {2, "a", 1, at_minute(10), 1},
                                {3, "a", 2, at_minute(900), 2}, {4, "b", 2, at_minute(5), 0}};
  auto seqs = weekly_sequences(s);
  REQUIRE(seqs.size() == 3);
  CHECK(seqs[0].tactics == std::vector<std::size_t>{1, 3});
  CHECK(seqs[0].session_ids == std::vector<std::size_t>{2, 1});
  CHECK(seqs[1].week == 2);
  CHECK(seqs[2].student == "b");
}

TEST_CASE("shuffled sessions give identical sequences") {
  Rng rng(1);
  std::vector<LabeledSession> s;
  for (std::size_t i = 0; i < 300; ++i) {
    s.push_back({i, "s" + std::to_string(rng.below(7)), static_cast<int>(1 + rng.below(11)),
                 at_minute(static_cast<long>(i * 37)), rng.below(12)});
  }
  auto base = weekly_sequences(s);
  std::size_t total = 0;
  for (const auto& w : base) total += w.tactics.size();
  CHECK(total == 300);
  CHECK(base.size() <= 7 * 11);
  for (int t = 0; t < 10; ++t) {
    rng.shuffle(s);
    auto again = weekly_sequences(s);
    REQUIRE(again.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(again[i].tactics == base[i].tactics);
      CHECK(again[i].session_ids == base[i].session_ids);
    }
  }
}

TEST_CASE("FOMM of hand-countable sequences") {
  auto single = fomm_from_sequence({0}, 2);
  CHECK(single.probabilities(0, 0) == 1.0);
  CHECK(single.probabilities(1, 2) == 1.0);
  CHECK(single.probabilities.row_sum(2) == 0.0);

  auto abab = fomm_from_sequence({0, 1, 0, 1}, 2);
  const auto& p = abab.probabilities;
  CHECK(p(0, 0) == 1.0);
  CHECK(p(1, 1) == 1.0);  // A -> B
  CHECK(p(2, 0) == 0.5);  // B -> A
  CHECK(p(2, 2) == 0.5);  // B -> END
  CHECK_THROWS_AS(fomm_from_sequence({}, 2), ValidationError);
  CHECK_THROWS_AS(fomm_from_sequence({5}, 2), ValidationError);
}

TEST_CASE("FOMM rows are normalized and flattening is a bijection") {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const std::size_t tc = 1 + rng.below(12);
    std::vector<std::size_t> seq(1 + rng.below(15));
    for (auto& v : seq) v = rng.below(tc);
    auto f = fomm_from_sequence(seq, tc);
    for (std::size_t r = 0; r < f.probabilities.dim(); ++r) {
      const double s = f.probabilities.row_sum(r);
      CHECK((s == 0.0 || std::abs(s - 1.0) <= 1e-9));
    }
    CHECK(f.probabilities.row_sum(0) == doctest::Approx(1.0));
    auto flat = flatten(f.probabilities);
    CHECK(flat.size() == (tc + 1) * (tc + 1));
    for (double v : flat) CHECK((v >= 0 && v <= 1));
    CHECK(flatten(unflatten(flat, tc)) == flat);
    double freq_sum = 0;
    for (double v : tactic_frequencies(seq, tc)) freq_sum += v;
    CHECK(freq_sum == doctest::Approx(1.0));
  }
}

TEST_CASE("risk partition") {
  std::vector<WeeklyStrategy> s(4);
  s[0].p_drop = 0.5;
  s[1].p_drop = 0.51;
  s[2].p_drop = 0.0;
  s[3].p_drop = 1.0;
  auto part = partition_by_risk(s);
  CHECK(part.low == std::vector<std::size_t>{0, 2});
  CHECK(part.high == std::vector<std::size_t>{1, 3});
  for (auto& x : s) x.p_drop = 0.0;
  CHECK(partition_by_risk(s).high.empty());
  s[1].p_drop.reset();
  CHECK_THROWS_AS(partition_by_risk(s), ValidationError);
}

TEST_CASE("planted risk mix is recovered exactly") {
  Rng rng(3);
  std::vector<WeeklyStrategy> s(458);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i].p_drop = i < 396 ? rng.uniform(0.0, 0.5) : rng.uniform(0.5000001, 1.0);
    s[i].tactics = {rng.below(12)};
  }
  rng.shuffle(s);
  auto part = partition_by_risk(s);
  CHECK(part.low.size() == 396);
  CHECK(part.high.size() == 62);
  // Non-risk fields never move a strategy across the partition.
  for (auto& x : s) x.tactics.push_back(3);
  auto again = partition_by_risk(s);
  CHECK(again.low == part.low);
}

TEST_CASE("EM recovers planted strategy templates") {
  const std::size_t tc = 6;
  const std::vector<std::vector<double>> starts{{1, 0, 0, 0, 0, 0}, {0, 0, 1, 0, 0, 0}, {0, 0, 0, 0, 1, 0}};
  const std::vector<std::vector<std::vector<double>>> next{
      {{0.1, 0.7, 0, 0, 0, 0, 0.2}, {0.6, 0.1, 0, 0, 0, 0, 0.3}, {1, 0, 0, 0, 0, 0, 0}, {1, 0, 0, 0, 0, 0, 0},
       {1, 0, 0, 0, 0, 0, 0}, {1, 0, 0, 0, 0, 0, 0}},
      {{0, 0, 1, 0, 0, 0, 0}, {0, 0, 1, 0, 0, 0, 0}, {0, 0, 0.1, 0.7, 0, 0, 0.2}, {0, 0, 0.6, 0.1, 0, 0, 0.3},
       {0, 0, 1, 0, 0, 0, 0}, {0, 0, 1, 0, 0, 0, 0}},
      {{0, 0, 0, 0, 1, 0, 0}, {0, 0, 0, 0, 1, 0, 0}, {0, 0, 0, 0, 1, 0, 0}, {0, 0, 0, 0, 1, 0, 0},
       {0, 0, 0, 0, 0.1, 0.7, 0.2}, {0, 0, 0, 0, 0.6, 0.1, 0.3}}};
  Rng rng(4);
  std::vector<WeeklyStrategy> s;
  std::vector<std::size_t> truth, all;
  for (std::size_t i = 0; i < 150; ++i) {
    const std::size_t g = i % 3;
    WeeklyStrategy w;
    w.student = "s" + std::to_string(i);
    w.week = 1;
    w.tactics = walk(rng, starts[g], next[g]);
    w.p_drop = 0.1;
    s.push_back(w);
    truth.push_back(g);
    all.push_back(i);
  }
  const auto catalog = StrategyCatalog::default_catalog();
  auto res = cluster_strategy_types(s, all, Risk::kLow, clustering::ClusteringConfig::em(3), tc,
                                    FeatureMode::kTransitions, tactic_names(tc), catalog);
  std::vector<std::size_t> labels;
  for (const auto& a : res.assignments) labels.push_back(a.cluster_index);
  CHECK(clustering::adjusted_rand_index(labels, truth) >= 0.8);
  auto again = cluster_strategy_types(s, all, Risk::kLow, clustering::ClusteringConfig::em(3), tc,
                                      FeatureMode::kTransitions, tactic_names(tc), catalog);
  for (std::size_t i = 0; i < labels.size(); ++i) CHECK(again.assignments[i].type_id == res.assignments[i].type_id);
  auto freq = cluster_strategy_types(s, all, Risk::kLow, clustering::ClusteringConfig::em(3), tc,
                                     FeatureMode::kTacticFrequencies, tactic_names(tc), catalog);
  labels.clear();
  for (const auto& a : freq.assignments) labels.push_back(a.cluster_index);
  CHECK(clustering::adjusted_rand_index(labels, truth) >= 0.8);
  std::set<std::string> names;
  for (const auto& t : res.types) names.insert(t.name);
  CHECK(names.count("Seeking understanding") == 1);
}

TEST_CASE("strategy type names follow catalog signatures") {
  // Tactic names drawn from the tactic catalog so the signatures apply.
  const std::vector<std::string> codes{"F_CurTasks_Core_Correct", "F_Lec_Engaged", "F_CourseMat_Examples"};
  std::vector<WeeklyStrategy> s;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < 30; ++i) {
    WeeklyStrategy w;
    w.student = std::to_string(i);
    w.tactics = std::vector<std::size_t>(3 + i % 4, i % 3);
    w.p_drop = 0.2;
    s.push_back(w);
    idx.push_back(i);
  }
  auto res = cluster_strategy_types(s, idx, Risk::kLow, clustering::ClusteringConfig::em(3), 3,
                                    FeatureMode::kTacticFrequencies, codes, StrategyCatalog::default_catalog());
  for (std::size_t i = 0; i < 30; ++i) {
    const auto& name = res.assignments[i].display_name;
    if (i % 3 == 0) CHECK(name == "Task-oriented, focused on performance");
    if (i % 3 == 1) CHECK(name == "Seeking understanding");
    if (i % 3 == 2) CHECK(name == "Resource-focused, more time on materials than tasks");
  }
  CHECK(res.types[0].type_id == 0);
  CHECK(res.types[0].name == "Task-oriented, focused on performance");
}

TEST_CASE("k equal to partition size gives singleton types") {
  std::vector<WeeklyStrategy> s(4);
  for (std::size_t i = 0; i < 4; ++i) {
    s[i].tactics = {i % 2};
    s[i].p_drop = 0.9;
  }
  auto res = cluster_strategy_types(s, {0, 1, 2, 3}, Risk::kHigh, clustering::ClusteringConfig::em(4), 2,
                                    FeatureMode::kTransitions, tactic_names(2), StrategyCatalog::default_catalog(), 3);
  std::set<std::size_t> ids;
  for (const auto& a : res.assignments) ids.insert(a.type_id);
  CHECK(ids == std::set<std::size_t>{3, 4, 5, 6});
  CHECK_THROWS_AS(cluster_strategy_types(s, {0, 1}, Risk::kHigh, clustering::ClusteringConfig::em(3), 2,
                                         FeatureMode::kTransitions, tactic_names(2),
                                         StrategyCatalog::default_catalog()),
                  ValidationError);
  CHECK_THROWS_AS(cluster_strategy_types(s, {}, Risk::kHigh, clustering::ClusteringConfig::em(1), 2,
                                         FeatureMode::kTransitions, tactic_names(2),
                                         StrategyCatalog::default_catalog()),
                  ValidationError);
}

TEST_CASE("heuristic net dependency measure") {
  CHECK(dependency_measure(9, 0) == doctest::Approx(0.9));
  CHECK(dependency_measure(4, 4) == 0.0);
  CHECK(self_loop_dependency(9) == doctest::Approx(0.9));

  std::vector<std::vector<std::size_t>> seqs;
  for (int i = 0; i < 9; ++i) seqs.push_back({0, 1});
  std::vector<const std::vector<std::size_t>*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);
  auto net = heuristic_net(ptrs, 2, 0.9, 0.0);
  bool found = false;
  for (const auto& e : net.edges) {
    if (e.from == 1 && e.to == 2) {
      found = true;
      CHECK(e.dependency == doctest::Approx(0.9));
      CHECK(e.frequency == 9);
    }
  }
  CHECK(found);
  auto strict = heuristic_net(ptrs, 2, 1.0, 0.0);
  CHECK(strict.edges.empty());
}

TEST_CASE("heuristic net edges respect thresholds") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::vector<std::size_t>> seqs(1 + rng.below(20));
    for (auto& s : seqs) {
      s.resize(1 + rng.below(8));
      for (auto& v : s) v = rng.below(5);
    }
    std::vector<const std::vector<std::size_t>*> ptrs;
    for (const auto& s : seqs) ptrs.push_back(&s);
    const double dep = rng.uniform(0, 0.95), freq = rng.uniform(0, 0.1);
    auto net = heuristic_net(ptrs, 5, dep, freq);
    for (const auto& e : net.edges) {
      CHECK(e.dependency >= dep);
      CHECK(e.dependency < 1.0);
      CHECK(e.dependency > -1.0);
      CHECK(e.frequency / net.total_transitions >= freq);
      CHECK(e.to != 0);
      CHECK(e.from != 6);
    }
    auto dot = heuristic_net_to_dot(net, tactic_names(5));
    CHECK(dot.find("digraph") == 0);
  }
}

TEST_CASE("strategy CSV exports round trip") {
  std::vector<WeeklyStrategy> s{{"a", 1, {0, 2, 1}, {5, 6, 9}, 0.25}, {"b", 3, {1}, {12}, 0.75}};
  auto back = parse_sequences_csv(sequences_csv(s));
  REQUIRE(back.size() == 2);
  CHECK(back[0].tactics == s[0].tactics);
  CHECK(back[0].session_ids == s[0].session_ids);
  CHECK(back[1].p_drop == 0.75);
  std::vector<StrategyTypeAssignment> a{{1, Risk::kHigh, 0, 3, "Low engagement", 0.75},
                                        {0, Risk::kLow, 1, 1, "Seeking understanding", 0.25}};
  auto csv = strategy_types_csv(s, a);
  CHECK(csv.rfind("student,week,risk,type_id,type_name,p_drop\na,1,low,1,Seeking understanding,0.25\n", 0) == 0);
  auto rows = parse_strategy_types_csv(csv);
  CHECK(rows[1].risk == Risk::kHigh);
  CHECK(rows[1].type_name == "Low engagement");
  auto dot = fomm_to_dot(fomm_from_sequence({0, 1}, 3).probabilities, tactic_names(3));
  CHECK(dot.find("\"START\" -> \"T0\"") != std::string::npos);
  CHECK(dot.find("\"T1\" -> \"END\"") != std::string::npos);
}
