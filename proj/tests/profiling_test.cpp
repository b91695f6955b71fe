#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/core.h>

#include "srl/common.hpp"
#include "srl/profiling.hpp"

using namespace srl;
using namespace srl::profiling;

namespace {

// Independent p-hat'' by direct pair counting.
double pair_effect(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0;
  for (double a : x)
    for (double b : y) s += a < b ? 1.0 : a == b ? 0.5 : 0.0;
  return s / static_cast<double>(x.size() * y.size());
}

// Independent exhaustive permutation p via bitmask enumeration.
double exhaustive_p(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> pooled = x;
  pooled.insert(pooled.end(), y.begin(), y.end());
  const std::size_t n = pooled.size();
  const double obs = std::abs(brunner_munzel_statistic(x, y).statistic);
  std::size_t count = 0, total = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != x.size()) continue;
    std::vector<double> a, b;
    for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1u ? a : b).push_back(pooled[i]);
    const double s = std::abs(brunner_munzel_statistic(a, b).statistic);
    count += std::isinf(obs) ? s >= obs : s >= obs - 1e-12 * std::max(1.0, obs);
    ++total;
  }
  return static_cast<double>(count) / static_cast<double>(total);
}

std::vector<double> random_sample(Rng& rng, std::size_t n, int levels) {
  std::vector<double> v(n);
  for (auto& x : v) x = static_cast<double>(rng.between(0, levels - 1));
  return v;
}

strategies::StrategyTypeRow row(const std::string& s, int week, std::size_t type, double p = 0.2) {
  return {s, week, strategies::Risk::kLow, type, "", p};
}

}  // namespace

TEST_CASE("effect estimate matches pair counting and is complementary") {
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    auto x = random_sample(rng, 2 + rng.below(8), 5);
    auto y = random_sample(rng, 2 + rng.below(8), 5);
    const auto xy = brunner_munzel_statistic(x, y);
    const auto yx = brunner_munzel_statistic(y, x);
    CHECK(xy.effect == doctest::Approx(pair_effect(x, y)).epsilon(1e-12));
    CHECK(xy.effect + yx.effect == doctest::Approx(1.0).epsilon(1e-12));
    if (xy.df) {
      CHECK(xy.statistic == doctest::Approx(-yx.statistic).epsilon(1e-12));
      CHECK(*xy.df == doctest::Approx(*yx.df).epsilon(1e-12));
    }
  }
}

TEST_CASE("effect estimates of swapped samples sum to exactly one") {
  Rng rng(17);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> x(1 + rng.below(40)), y(1 + rng.below(40));
    for (auto& v : x) v = rng.uniform() < 0.3 ? static_cast<double>(rng.below(5)) : rng.normal();
    for (auto& v : y) v = rng.uniform() < 0.3 ? static_cast<double>(rng.below(5)) : rng.normal();
    CHECK(brunner_munzel_statistic(x, y).effect + brunner_munzel_statistic(y, x).effect == 1.0);
    CHECK(brunner_munzel_statistic(x, x).effect == 0.5);
  }
}

TEST_CASE("identical samples and complete separation") {
  std::vector<double> x{1, 2, 2, 5, 7};
  auto r = brunner_munzel(x, x);
  CHECK(r.effect == doctest::Approx(0.5));
  CHECK(r.statistic == doctest::Approx(0.0));
  CHECK(r.p_value == doctest::Approx(1.0));

  std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  auto s = brunner_munzel(a, b);
  CHECK(s.effect == doctest::Approx(1.0));
  CHECK(s.fallback);
  CHECK(s.mode == TestMode::kPermutation);
  CHECK(s.exact);
  CHECK(s.resamples == 20);
  CHECK(s.p_value == doctest::Approx(0.1));
  CHECK(std::isinf(s.statistic));
  CHECK(s.statistic < 0);
}

TEST_CASE("analytic statistic matches a hand computation") {
  // x = {1,2,4}, y = {3,5,6,7}; pooled ranks x: 1,2,4 ; y: 3,5,6,7.
  std::vector<double> x{1, 2, 4}, y{3, 5, 6, 7};
  const auto st = brunner_munzel_statistic(x, y);
  // Placements: x -> 0,0,1 (mean 1/3); y -> 2,3,3,3 (mean 11/4).
  const double sx = ((0 - 1.0 / 3) * (0 - 1.0 / 3) * 2 + (1 - 1.0 / 3) * (1 - 1.0 / 3)) / 2;
  const double sy = ((2 - 2.75) * (2 - 2.75) + 3 * (3 - 2.75) * (3 - 2.75)) / 3;
  const double v = 3 * sx + 4 * sy;
  const double stat = 3.0 * 4.0 * (7.0 / 3 - 21.0 / 4) / (7.0 * std::sqrt(v));
  const double df = v * v / ((3 * sx) * (3 * sx) / 2 + (4 * sy) * (4 * sy) / 3);
  CHECK(st.statistic == doctest::Approx(stat).epsilon(1e-12));
  REQUIRE(st.df);
  CHECK(*st.df == doctest::Approx(df).epsilon(1e-12));
  CHECK(st.effect == doctest::Approx(11.0 / 12));
}

TEST_CASE("analytic p-value follows the t reference") {
  // Reference: scipy.stats.brunnermunzel(x, y), whose statistic has the opposite sign.
  std::vector<double> x{1, 2, 4, 4, 8, 9}, y{3, 5, 6, 7, 10, 11, 12};
  auto r = brunner_munzel(x, y);
  REQUIRE(r.df);
  CHECK(r.statistic == doctest::Approx(-1.813296301838414).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(0.09848326873436967).epsilon(1e-9));
  auto swapped = brunner_munzel(y, x);
  CHECK(swapped.p_value == doctest::Approx(r.p_value).epsilon(1e-12));
  std::vector<double> far{20, 21, 22, 23, 24, 25, 26};
  CHECK(brunner_munzel(x, far).p_value < r.p_value);
}

TEST_CASE("permutation p equals exhaustive enumeration for small samples") {
  Rng rng(11);
  for (int t = 0; t < 30; ++t) {
    auto x = random_sample(rng, 1 + rng.below(7), 4);
    auto y = random_sample(rng, 1 + rng.below(7), 4);
    BMOptions opts;
    opts.mode = TestMode::kPermutation;
    auto r = brunner_munzel(x, y, opts);
    CHECK(r.exact);
    CHECK(r.p_value == doctest::Approx(exhaustive_p(x, y)).epsilon(1e-12));
    CHECK(r.p_value >= 0);
    CHECK(r.p_value <= 1);
  }
}

TEST_CASE("Monte Carlo permutation p is seed invariant within 2/sqrt(B)") {
  Rng rng(3);
  auto x = random_sample(rng, 14, 6);
  auto y = random_sample(rng, 16, 6);
  for (auto& v : y) v += 0.5;
  BMOptions a;
  a.mode = TestMode::kPermutation;
  a.allow_exact = false;
  BMOptions b = a;
  b.seed = 977;
  const auto ra = brunner_munzel(x, y, a), rb = brunner_munzel(x, y, b);
  CHECK_FALSE(ra.exact);
  CHECK(ra.resamples == 10000);
  CHECK(std::abs(ra.p_value - rb.p_value) <= 2.0 / std::sqrt(10000.0));
  CHECK(brunner_munzel(x, y, a).p_value == ra.p_value);
}

TEST_CASE("analytic mode needs two observations per side") {
  std::vector<double> x{1}, y{2, 3};
  CHECK_THROWS_AS(brunner_munzel(x, y), ValidationError);
  BMOptions p;
  p.mode = TestMode::kPermutation;
  CHECK_NOTHROW(brunner_munzel(x, y, p));
  std::vector<double> bad{1, NAN};
  CHECK_THROWS_AS(brunner_munzel(bad, y), ValidationError);
}

TEST_CASE("reporting format") {
  BMTestResult r;
  r.statistic = -3.351;
  r.df = 434.690;
  r.p_value = 0.0004;
  r.effect = 0.589;
  CHECK(format_result(r) == "p̂*(434.690) = −3.351, p < .001, p̂″ = 0.589");
  r.statistic = 27.221;
  r.df = 39;
  r.p_value = 1e-9;
  r.effect = 0.975;
  CHECK(format_result(r) == "p̂*(39) = 27.221, p < .001, p̂″ = 0.975");
  r.statistic = 0.282;
  r.df = 35.2;
  r.p_value = 0.779;
  CHECK(format_result(r) == "p̂*(35.200) = 0.282, p = .779");
  CHECK(format_result(r, true) == "p̂*(35.200) = 0.282, p = .779, p̂″ = 0.975");
  BMTestResult perm;
  perm.mode = TestMode::kPermutation;
  perm.p_value = 0.713;
  CHECK(format_result(perm) == "permuted Brunner-Munzel, p = .713");
  CHECK(format_p(0.0449) == "p = .045");
  CHECK(format_p(1.0) == "p = 1.000");
}

TEST_CASE("opinions and themes round trip") {
  CHECK(parse_opinion("positive") == Opinion::kPositive);
  CHECK_FALSE(parse_opinion("absent"));
  CHECK_FALSE(parse_opinion(""));
  CHECK_THROWS_AS(parse_opinion("great"), ValidationError);
  std::map<std::string, Opinion> ops{{"s1", Opinion::kNegative}, {"s2", Opinion::kNeutral}};
  CHECK(parse_opinions_csv(opinions_csv(ops)) == ops);
  std::vector<ThemeCode> themes{{"s1", "Course Materials"}, {"s3", "AI Tools"}};
  auto back = parse_themes_csv(themes_csv(themes));
  REQUIRE(back.size() == 2);
  CHECK(back[1].theme == "AI Tools");
  SelfReports rep{themes, ops};
  CHECK(rep.answerers() == std::set<std::string>{"s1", "s2", "s3"});
  CHECK(theme_vocabulary().size() == 48);
  CHECK(theme_vocabulary().front().name == "Course Materials");
}

TEST_CASE("profiles are weekly relative frequencies") {
  std::vector<strategies::StrategyTypeRow> rows;
  for (int w = 1; w <= 11; ++w) rows.push_back(row("a", w, w <= 6 ? 0 : 1));
  for (int w = 1; w <= 4; ++w) rows.push_back(row("b", w, 3));
  auto p = build_profiles(rows, 4);
  REQUIRE(p.size() == 2);
  CHECK(p[0].student == "a");
  CHECK(p[0].weeks_observed == 11);
  CHECK(p[0].values[0] == doctest::Approx(6.0 / 11));
  CHECK(p[0].values[1] == doctest::Approx(5.0 / 11));
  CHECK(p[1].values[3] == doctest::Approx(1.0));
  for (const auto& q : p) CHECK(std::accumulate(q.values.begin(), q.values.end(), 0.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(build_profiles(rows, 3), ValidationError);
}

namespace {

struct PlantedCohort {
  std::vector<StudentProfile> profiles;
  CohortData data;
  std::string outlier;
};

PlantedCohort planted_cohort() {
  PlantedCohort c;
  Rng rng(5);
  const std::vector<std::vector<double>> archetypes{
      {0.8, 0.1, 0.1, 0, 0, 0}, {0.1, 0.8, 0.1, 0, 0, 0}, {0.1, 0.1, 0.8, 0, 0, 0}, {0, 0, 0.1, 0.5, 0, 0.4}};
  int id = 0;
  for (std::size_t a = 0; a < archetypes.size(); ++a) {
    for (int s = 0; s < 8; ++s) {
      StudentProfile p;
      p.student = fmt::format("s{:02d}", id++);
      p.weeks_observed = 11;
      p.values = archetypes[a];
      const std::size_t from = rng.below(6), to = rng.below(6);
      const double d = std::min(0.05, p.values[from]);
      p.values[from] -= d;
      p.values[to] += d;
      c.profiles.push_back(p);
      c.data.grades[p.student] = {p.student, 80, 80, 70, a == 3 ? 0 : 3};
    }
  }
  StudentProfile out;
  out.student = "s99";
  out.weeks_observed = 11;
  out.values = {0, 0, 0, 0, 1, 0};
  c.outlier = out.student;
  c.profiles.push_back(out);
  c.data.grades[out.student] = {out.student, 90, 90, 80, 5};
  return c;
}

}  // namespace

TEST_CASE("outlier profile becomes a singleton at k = 5") {
  auto c = planted_cohort();
  const std::vector<std::string> names{"t0", "t1", "t2", "t3", "t4", "t5"};
  const std::vector<strategies::Risk> risks(6, strategies::Risk::kLow);
  auto res = cluster_profiles(c.profiles, 5, names, risks, c.data, ProfileCatalog{});
  REQUIRE(res.clusters.size() == 5);
  std::size_t total = 0;
  bool singleton = false;
  for (const auto& cl : res.clusters) {
    CHECK_FALSE(cl.members.empty());
    total += cl.summary.n_students;
    if (cl.members == std::vector<std::string>{c.outlier}) singleton = true;
  }
  CHECK(total == c.profiles.size());
  CHECK(singleton);
  CHECK(res.tree.leaves == c.profiles.size());
  CHECK(res.clusters[0].display_name == "Profile 1");

  auto all = cluster_profiles(c.profiles, c.profiles.size(), names, risks, c.data, ProfileCatalog{});
  for (const auto& cl : all.clusters) CHECK(cl.members.size() == 1);
  CHECK_THROWS_AS(cluster_profiles(c.profiles, c.profiles.size() + 1, names, risks, c.data), ValidationError);
}

TEST_CASE("default catalog names planted profiles") {
  auto c = planted_cohort();
  const std::vector<std::string> names{"Seeking understanding",
                                       "Resource-focused, more time on materials than tasks",
                                       "Task-oriented, focused on performance",
                                       "Risky focus on mandatory tasks only",
                                       "Other",
                                       "Dropping"};
  std::vector<strategies::Risk> risks(6, strategies::Risk::kLow);
  risks[3] = risks[5] = strategies::Risk::kHigh;
  // The outlier uses a high-risk type, like the persevering student.
  c.profiles.back().values = {0, 0, 0, 1, 0, 0};
  auto res = cluster_profiles(c.profiles, 5, names, risks, c.data);
  const auto& cat = ProfileCatalog::default_catalog();
  for (std::size_t i = 0; i < 5; ++i) CHECK(res.clusters[i].display_name == cat.entries[i].name);
  CHECK(res.clusters[3].members == std::vector<std::string>{c.outlier});
  CHECK(res.clusters[4].summary.median_grade == doctest::Approx(0.0));
  CHECK(res.clusters[0].members.size() == 8);
  for (std::size_t i = 0; i < c.profiles.size(); ++i) {
    const auto& m = res.clusters[res.labels[i]].members;
    CHECK(std::find(m.begin(), m.end(), c.profiles[i].student) != m.end());
  }
  auto back = ProfileCatalog::from_json(cat.to_json());
  CHECK(back.to_json() == cat.to_json());
}

TEST_CASE("summaries use medians, pooled p_drop and the majority theme rule") {
  CohortData d;
  d.grades["a"] = {"a", 50, 60, 40, 1};
  d.grades["b"] = {"b", 70, 80, 60, 3};
  d.grades["c"] = {"c", 90, 100, 80, 5};
  d.strategies = {row("a", 1, 0, 0.2), row("a", 2, 0, 0.4), row("b", 1, 0, 0.6), row("z", 1, 0, 0.9)};
  d.reports.themes = {{"a", "Course Materials"}, {"b", "Course Materials"}, {"a", "AI Tools"}, {"z", "AI Tools"}};
  d.reports.opinions = {{"a", Opinion::kPositive}, {"b", Opinion::kNeutral}, {"c", Opinion::kPositive}};
  auto s = summarize({"a", "b", "c", "d"}, d);
  CHECK(s.n_students == 4);
  CHECK(*s.median_task_pct == doctest::Approx(80));
  CHECK(*s.median_grade == doctest::Approx(3));
  CHECK(*s.mean_p_drop == doctest::Approx(0.4));
  CHECK(s.answerers == 3);
  REQUIRE(s.majority_themes.size() == 1);
  CHECK(s.majority_themes[0] == std::pair<std::string, std::size_t>{"Course Materials", 2});
  CHECK(s.opinions["positive"] == 2);
  CHECK(s.opinions["neutral"] == 1);
  CHECK(s.opinions["absent"] == 1);
  auto empty = summarize({"q"}, d);
  CHECK_FALSE(empty.median_grade);
  CHECK(empty.majority_themes.empty());
}

TEST_CASE("planted grade gap gives complete separation") {
  CohortData d;
  std::set<std::string> members;
  for (int i = 0; i < 10; ++i) {
    const std::string a = fmt::format("a{}", i), b = fmt::format("b{}", i);
    members.insert(a);
    d.grades[a] = {a, 0, 0, 0, 4 + i % 2};
    d.grades[b] = {b, 0, 0, 0, i % 4};
  }
  auto c = compare_cluster("A", members, Variable::kGrade, d);
  REQUIRE(c.computable);
  CHECK(c.result.effect == doctest::Approx(0.0));
  CHECK(c.result.statistic > 0);
  CHECK(c.result.p_value < 0.01);
  auto rev = compare_cluster("B", {"b0", "b1", "b2", "b3", "b4", "b5", "b6", "b7", "b8", "b9"}, Variable::kGrade, d);
  CHECK(rev.result.effect == doctest::Approx(1.0));

  CompareOptions no_drop;
  no_drop.include_dropouts = false;
  auto nd = compare_cluster("A", members, Variable::kGrade, d, no_drop);
  CHECK(nd.result.n_y == 7);
}

TEST_CASE("comparisons on identical pools, opinions and insufficient data") {
  CohortData d;
  std::set<std::string> members;
  for (int i = 0; i < 8; ++i) {
    const std::string a = fmt::format("a{}", i), b = fmt::format("b{}", i);
    members.insert(a);
    d.strategies.push_back(row(a, 1, 0, 0.1 * (i % 4)));
    d.strategies.push_back(row(b, 1, 0, 0.1 * (i % 4)));
    d.reports.opinions[a] = static_cast<Opinion>(i % 3);
    d.reports.opinions[b] = static_cast<Opinion>(i % 3);
  }
  auto p = compare_cluster("A", members, Variable::kPDrop, d);
  REQUIRE(p.computable);
  CHECK(p.result.effect == doctest::Approx(0.5));
  auto o = compare_cluster("A", members, Variable::kOpinion, d);
  CHECK(o.result.effect == doctest::Approx(0.5));
  CHECK(o.result.n_x == 8);

  auto small = compare_cluster("S", {"a0", "a1", "a2"}, Variable::kOpinion, d);
  CHECK(small.result.mode == TestMode::kPermutation);
  CHECK(small.formatted.rfind("permuted Brunner-Munzel", 0) == 0);

  auto none = compare_cluster("N", {"a0"}, Variable::kGrade, d);
  CHECK_FALSE(none.computable);
  CHECK(none.reason.find("not computable") != std::string::npos);
  auto csv = comparisons_csv({p, none});
  CHECK(csv.find("not computable") != std::string::npos);
}
