#include <algorithm>
#include <map>
#include <numeric>

#include "doctest.h"
#include "srl/common.hpp"
#include "srl/ingest.hpp"
#include "srl/tactics.hpp"

using namespace srl;
using namespace srl::tactics;

namespace {

std::vector<std::string> registry_codes() { return ingest::EventCodeRegistry::default_registry().codes(); }

std::size_t code_index(const std::vector<std::string>& codes, const std::string& code) {
  return static_cast<std::size_t>(std::find(codes.begin(), codes.end(), code) - codes.begin());
}

// Relative-frequency vector of `length` events drawn from `pool`.
sessions::SessionFrequencyVector draw(Rng& rng, std::size_t id, const std::vector<std::string>& codes,
                                      const std::vector<std::string>& pool, std::size_t length) {
  sessions::SessionFrequencyVector v{id, std::vector<double>(codes.size(), 0.0)};
  for (std::size_t e = 0; e < length; ++e) v.values[code_index(codes, pool[rng.below(pool.size())])] += 1.0 / length;
  return v;
}

}  // namespace

TEST_CASE("reading-only and task-only sessions separate into read and answer profiles") {
  const auto codes = registry_codes();
  Rng rng(1);
  const std::vector<std::string> reading{"read:materials-book", "read:lecture-cur-wk", "read:tasks-cur", "read:tasks"};
  const std::vector<std::string> tasks{"answer:tasks-cur-basic", "answer-wrong:tasks-cur-basic", "answer:tasks-cur-core",
                                       "answer:tasks-cur-intro"};
  std::vector<sessions::SessionFrequencyVector> vectors;
  for (std::size_t i = 0; i < 60; ++i) {
    vectors.push_back(draw(rng, i, codes, i % 2 ? tasks : reading, 5 + rng.below(10)));
  }
  auto det = detect_tactics(vectors, codes, clustering::ClusteringConfig::kmedoids(2));
  REQUIRE(det.tactics.size() == 2);
  std::size_t total = 0;
  for (const auto& t : det.tactics) {
    total += t.session_count;
    double read = 0, answer = 0, sum = 0;
    for (std::size_t c = 0; c < codes.size(); ++c) {
      sum += t.event_proportions[c];
      if (codes[c].rfind("read:", 0) == 0) read += t.event_proportions[c];
      if (codes[c].rfind("answer", 0) == 0) answer += t.event_proportions[c];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::max(read, answer) > 0.99);
  }
  CHECK(total == 60);
  for (std::size_t i = 0; i < 60; ++i) {
    const auto& t = det.tactics[det.session_tactics[i]];
    const double read = t.event_proportions[code_index(codes, "read:materials-book")] +
                        t.event_proportions[code_index(codes, "read:tasks")];
    CHECK((read > 0) == (i % 2 == 0));
  }
}

TEST_CASE("cluster of identical vectors has that vector as profile") {
  const auto codes = registry_codes();
  std::vector<sessions::SessionFrequencyVector> vectors;
  std::vector<double> v(codes.size(), 0.0);
  v[3] = 0.25;
  v[10] = 0.75;
  for (std::size_t i = 0; i < 5; ++i) vectors.push_back({i + 100, v});
  auto det = detect_tactics(vectors, codes, clustering::ClusteringConfig::kmedoids(1));
  REQUIRE(det.tactics.size() == 1);
  CHECK(det.tactics[0].event_proportions == v);
  CHECK(det.tactics[0].session_count == 5);
  CHECK(det.session_ids.front() == 100);
}

TEST_CASE("tactics are ordered by descending session count") {
  const auto codes = registry_codes();
  std::vector<sessions::SessionFrequencyVector> vectors;
  std::vector<std::size_t> labels;
  const std::size_t sizes[] = {3, 9, 1, 5};
  std::size_t id = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t j = 0; j < sizes[c]; ++j) {
      std::vector<double> v(codes.size(), 0.0);
      v[c] = 1.0;
      vectors.push_back({id++, v});
      labels.push_back(c);
    }
  }
  auto det = tactics_from_labels(vectors, codes, labels, {});
  std::vector<std::size_t> counts;
  for (const auto& t : det.tactics) counts.push_back(t.session_count);
  CHECK(counts == std::vector<std::size_t>{9, 5, 3, 1});
  CHECK(det.tactics[0].event_proportions[1] == 1.0);
  CHECK(det.tactics[0].code == "T1");
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    CHECK(det.tactics[det.session_tactics[i]].event_proportions[labels[i]] == 1.0);
  }
}

TEST_CASE("twelve clusters receive the catalog names matching their signatures") {
  const auto codes = registry_codes();
  const auto catalog = TacticCatalog::default_catalog();
  REQUIRE(catalog.entries.size() == 12);
  std::vector<sessions::SessionFrequencyVector> vectors;
  std::vector<std::size_t> labels;
  Rng rng(2);
  std::size_t id = 0;
  for (std::size_t e = 0; e < 12; ++e) {
    std::vector<std::string> pool;
    for (const auto& [code, w] : catalog.entries[e].signature) {
      if (w > 0) pool.push_back(code);
    }
    for (std::size_t j = 0; j < 20 + e; ++j) {
      vectors.push_back(draw(rng, id++, codes, pool, 8));
      labels.push_back(e);
    }
  }
  auto det = tactics_from_labels(vectors, codes, labels, {});
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    CHECK(det.tactics[det.session_tactics[i]].code == catalog.entries[labels[i]].code);
  }
}

TEST_CASE("top codes agree with an independent sort") {
  Rng rng(3);
  std::vector<std::string> codes;
  for (int i = 0; i < 20; ++i) codes.push_back("c" + std::to_string(i));
  for (int t = 0; t < 50; ++t) {
    Tactic tac;
    tac.event_proportions.assign(20, 0.0);
    for (auto& p : tac.event_proportions) p = rng.bernoulli(0.4) ? std::round(rng.uniform() * 8) / 8 : 0.0;
    std::vector<std::pair<double, std::size_t>> ref;
    for (std::size_t i = 0; i < 20; ++i)
      if (tac.event_proportions[i] > 0) ref.push_back({-tac.event_proportions[i], i});
    std::sort(ref.begin(), ref.end());
    ref.resize(std::min<std::size_t>(ref.size(), 5));
    auto top = top_codes(tac, codes, 5);
    REQUIRE(top.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(top[i].first == codes[ref[i].second]);
      CHECK(top[i].second == -ref[i].first);
    }
  }
}

TEST_CASE("tactic report table shape") {
  const auto codes = registry_codes();
  CHECK(tactic_report_csv({}, codes) == "code,N,description,example codes\n");
  Tactic t;
  t.code = "F_Lec_Video";
  t.description = "Focusing on lecture videos";
  t.session_count = 7;
  t.event_proportions.assign(codes.size(), 0.0);
  t.event_proportions[code_index(codes, "watch-video:lecture-cur-wk")] = 0.6;
  t.event_proportions[code_index(codes, "read:lecture-cur-wk")] = 0.4;
  auto csv = tactic_report_csv({t}, codes);
  CHECK(csv.find("F_Lec_Video,7,Focusing on lecture videos,watch-video:lecture-cur-wk (60.0%) read:lecture-cur-wk (40.0%)") !=
        std::string::npos);
  auto html = tactic_report_html({t}, codes);
  CHECK(html.find("<th>Example codes</th>") != std::string::npos);
  CHECK(html.find("<td>7</td>") != std::string::npos);
}

TEST_CASE("minority codes stay visible in proportions") {
  const auto codes = registry_codes();
  std::vector<double> v(codes.size(), 0.0);
  v[code_index(codes, "answer:tasks-cur-basic")] = 0.9;
  v[code_index(codes, "answer-wrong:tasks-cur-basic")] = 0.1;
  auto det = tactics_from_labels({{0, v}}, codes, {0}, {});
  auto top = top_codes(det.tactics[0], codes);
  REQUIRE(top.size() == 2);
  CHECK(top[1].first == "answer-wrong:tasks-cur-basic");
  CHECK(proportions_csv(det.tactics, codes).find("0.1") != std::string::npos);
}

TEST_CASE("session tactic CSV and JSON round trip") {
  const auto codes = registry_codes();
  Rng rng(4);
  std::vector<sessions::SessionFrequencyVector> vectors;
  for (std::size_t i = 0; i < 30; ++i) vectors.push_back(draw(rng, i * 3, codes, {"read:tasks", "read:tasks-cur", "session-start:None"}, 4));
  auto det = detect_tactics(vectors, codes, clustering::ClusteringConfig::kmedoids(3));
  auto parsed = parse_session_tactics_csv(session_tactics_csv(det));
  REQUIRE(parsed.size() == 30);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(parsed[i].session_id == i * 3);
    CHECK(parsed[i].tactic_id == det.session_tactics[i]);
  }
  auto back = tactics_from_json(tactics_to_json(det));
  REQUIRE(back.tactics.size() == det.tactics.size());
  CHECK(back.tactics[0].event_proportions == det.tactics[0].event_proportions);
  CHECK(back.tactics[1].code == det.tactics[1].code);
  auto again = detect_tactics(vectors, codes, clustering::ClusteringConfig::kmedoids(3));
  CHECK(again.session_tactics == det.session_tactics);
}
