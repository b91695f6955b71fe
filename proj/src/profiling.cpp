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

#include "srl/profiling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/core.h>

#include "srl/common.hpp"
#include "srl/io.hpp"

namespace srl::profiling {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> midranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) r[idx[t]] = mid;
    i = j;
  }
  return r;
}

double mean(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// a >= b with slack for rounding in recomputed statistics.
bool at_least(double a, double b) {
  if (std::isinf(b)) return a >= b;
  return a >= b - 1e-12 * std::max(1.0, std::abs(b));
}

double binomial(std::size_t n, std::size_t k) {
  double r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

std::string signed_fixed(double v, int decimals) {
  if (std::isinf(v)) return v < 0 ? "−∞" : "∞";
  std::string s = fmt::format("{:.{}f}", std::abs(v), decimals);
  const bool zero = s.find_first_not_of("0.") == std::string::npos;
  return (v < 0 && !zero ? "−" : "") + s;
}

}  // namespace

std::string to_string(TestMode mode) { return mode == TestMode::kAnalytic ? "analytic" : "permutation"; }

BMStatistic brunner_munzel_statistic(std::span<const double> x, std::span<const double> y) {
  const std::size_t n1 = x.size(), n2 = y.size();
  if (n1 == 0 || n2 == 0) throw ValidationError("Brunner-Munzel needs non-empty samples");
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  const auto rc = midranks(pooled);
  const auto rx = midranks(x), ry = midranks(y);
  const std::span<const double> rcx(rc.data(), n1), rcy(rc.data() + n1, n2);
  const double m1 = mean(rcx), m2 = mean(rcy);
  const double d1 = static_cast<double>(n1), d2 = static_cast<double>(n2);
  double s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < n1; ++i) s1 += std::pow(rcx[i] - rx[i] - m1 + (d1 + 1) / 2, 2);
  for (std::size_t i = 0; i < n2; ++i) s2 += std::pow(rcy[i] - ry[i] - m2 + (d2 + 1) / 2, 2);
  s1 = n1 > 1 ? s1 / (d1 - 1) : 0.0;
  s2 = n2 > 1 ? s2 / (d2 - 1) : 0.0;
  BMStatistic out;
  // Rank sums are exact half-integers. Dividing the smaller of the two complementary
  // pair counts and taking 1 - q for the larger one makes effect(x,y) + effect(y,x)
  // round to exactly 1.
  double r2 = 0;
  for (double r : rcy) r2 += r;
  const double u2 = r2 - d2 * (d2 + 1) / 2, pairs = d1 * d2;
  out.effect = 2 * u2 <= pairs ? u2 / pairs : 1.0 - (pairs - u2) / pairs;
  const double v = d1 * s1 + d2 * s2;
  if (v > 0 && n1 > 1 && n2 > 1) {
    out.statistic = d1 * d2 * (m1 - m2) / ((d1 + d2) * std::sqrt(v));
    out.df = v * v / ((d1 * s1) * (d1 * s1) / (d1 - 1) + (d2 * s2) * (d2 * s2) / (d2 - 1));
  } else if (v > 0) {
    out.statistic = d1 * d2 * (m1 - m2) / ((d1 + d2) * std::sqrt(v));
  } else {
    out.statistic = m1 > m2 ? kInf : m1 < m2 ? -kInf : 0.0;
  }
  return out;
}

BMTestResult brunner_munzel(std::span<const double> x, std::span<const double> y, const BMOptions& options) {
  for (double v : x)
    if (!std::isfinite(v)) throw ValidationError("Brunner-Munzel sample contains non-finite values");
  for (double v : y)
    if (!std::isfinite(v)) throw ValidationError("Brunner-Munzel sample contains non-finite values");
  BMTestResult r;
  r.n_x = x.size();
  r.n_y = y.size();
  if (options.mode == TestMode::kAnalytic && (x.size() < 2 || y.size() < 2)) {
    throw ValidationError("analytic Brunner-Munzel needs at least two observations per sample");
  }
  const auto obs = brunner_munzel_statistic(x, y);
  r.statistic = obs.statistic;
  r.df = obs.df;
  r.effect = obs.effect;
  r.mode = options.mode;
  if (options.mode == TestMode::kAnalytic && obs.df) {
    boost::math::students_t dist(*obs.df);
    const double lower = boost::math::cdf(dist, obs.statistic);
    const double upper = boost::math::cdf(boost::math::complement(dist, obs.statistic));
    r.p_value = std::min(1.0, 2.0 * std::min(lower, upper));
    return r;
  }
  if (options.mode == TestMode::kAnalytic) r.fallback = true;
  r.mode = TestMode::kPermutation;
  if (options.resamples == 0) throw ValidationError("permutation test needs at least one resample");
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  const std::size_t n = pooled.size(), n1 = x.size();
  const double target = std::abs(obs.statistic);
  std::vector<double> a(n1), b(n - n1);
  auto extreme = [&]() { return at_least(std::abs(brunner_munzel_statistic(a, b).statistic), target); };
  if (options.allow_exact && binomial(n, n1) <= static_cast<double>(options.resamples)) {
    std::vector<bool> pick(n, false);
    std::fill(pick.begin(), pick.begin() + static_cast<long>(n1), true);
    std::size_t count = 0, total = 0;
    do {
      std::size_t ia = 0, ib = 0;
      for (std::size_t i = 0; i < n; ++i) (pick[i] ? a[ia++] : b[ib++]) = pooled[i];
      count += extreme();
      ++total;
    } while (std::prev_permutation(pick.begin(), pick.end()));
    r.exact = true;
    r.resamples = total;
    r.p_value = static_cast<double>(count) / static_cast<double>(total);
    return r;
  }
  Rng rng(options.seed);
  std::size_t count = 0;
  std::vector<double> shuffled = pooled;
  for (std::size_t s = 0; s < options.resamples; ++s) {
    rng.shuffle(shuffled);
    std::copy(shuffled.begin(), shuffled.begin() + static_cast<long>(n1), a.begin());
    std::copy(shuffled.begin() + static_cast<long>(n1), shuffled.end(), b.begin());
    count += extreme();
  }
  r.resamples = options.resamples;
  r.p_value = static_cast<double>(count + 1) / static_cast<double>(options.resamples + 1);
  return r;
}

std::string format_p(double p) {
  if (p < 0.001) return "p < .001";
  std::string s = fmt::format("{:.3f}", p);
  if (s.rfind("0.", 0) == 0) s.erase(0, 1);
  return "p = " + s;
}

std::string format_result(const BMTestResult& r, bool always_effect) {
  std::string out;
  if (r.mode == TestMode::kPermutation) {
    out = "permuted Brunner-Munzel, " + format_p(r.p_value);
  } else {
    const double df = r.df.value_or(0.0);
    const std::string df_text = std::abs(df - std::round(df)) < 1e-9 ? fmt::format("{:.0f}", df) : fmt::format("{:.3f}", df);
    out = fmt::format("p̂*({}) = {}, {}", df_text, signed_fixed(r.statistic, 3), format_p(r.p_value));
  }
  if (always_effect || r.p_value < 0.05) out += fmt::format(", p̂″ = {:.3f}", r.effect);
  return out;
}

// ------------------------------------------------------------ self-reports

std::string to_string(Opinion o) {
  switch (o) {
    case Opinion::kNegative: return "negative";
    case Opinion::kNeutral: return "neutral";
    case Opinion::kPositive: return "positive";
  }
  return "absent";
}

std::optional<Opinion> parse_opinion(std::string_view text) {
  if (text == "negative") return Opinion::kNegative;
  if (text == "neutral") return Opinion::kNeutral;
  if (text == "positive") return Opinion::kPositive;
  if (text == "absent" || text.empty()) return std::nullopt;
  throw ValidationError(fmt::format("unknown opinion '{}' (positive|neutral|negative|absent)", text));
}

std::set<std::string> SelfReports::answerers() const {
  std::set<std::string> out;
  for (const auto& t : themes) out.insert(t.student);
  for (const auto& [s, o] : opinions) out.insert(s);
  return out;
}

std::vector<ThemeCode> parse_themes_csv(std::string_view text) {
  const auto table = io::CsvTable::parse(text);
  table.require_columns({"student", "theme"});
  std::vector<ThemeCode> out;
  for (std::size_t r = 0; r < table.rows().size(); ++r) out.push_back({table.at(r, "student"), table.at(r, "theme")});
  return out;
}

std::string themes_csv(const std::vector<ThemeCode>& themes) {
  io::CsvWriter w({"student", "theme"});
  for (const auto& t : themes) w.add_row({t.student, t.theme});
  return w.str();
}

std::map<std::string, Opinion> parse_opinions_csv(std::string_view text) {
  const auto table = io::CsvTable::parse(text);
  table.require_columns({"student", "opinion"});
  std::map<std::string, Opinion> out;
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    const auto o = parse_opinion(table.at(r, "opinion"));
    if (o) out[table.at(r, "student")] = *o;
  }
  return out;
}

std::string opinions_csv(const std::map<std::string, Opinion>& opinions) {
  io::CsvWriter w({"student", "opinion"});
  for (const auto& [s, o] : opinions) w.add_row({s, to_string(o)});
  return w.str();
}

const std::vector<ThemeInfo>& theme_vocabulary() {
  static const std::vector<ThemeInfo> themes{
      {"Course Materials", "The student indicates using the provided course materials."},
      {"Weekly Assignments", "The student reports completing weekly assignments."},
      {"Lecture Participation", "The student reports attending lectures or viewing lecture materials."},
      {"Emphasis on Regularity", "The student highlights the importance of regular study habits."},
      {"Group Sessions", "The student reports attending computer lab sessions."},
      {"Positive Opinion of Own Effort", "The student gives an overall positive opinion of their own effort in the course."},
      {"Peer Support Groups", "The student reports participating in a guided peer support group during the course."},
      {"Additional Online Materials", "The student reports utilizing supplementary online resources."},
      {"Importance of Acquaintances", "The student emphasizes the role of acquaintances in completing the course."},
      {"Anticipation of Future Challenges", "The student exhibits self-regulation by preparing for upcoming topics or difficulties."},
      {"Perceived Course Workload", "The student mentions that the course is labor-intensive."},
      {"Adaptation of Study Methods", "The student adapts study methods to suit their individual needs."},
      {"Neutral Opinion of Own Effort", "The student gives an overall neutral opinion of their own effort in the course."},
      {"Work-Induced Study Rhythm", "The student indicates that employment provides structure to their studies."},
      {"Seeking External Help", "The student reports seeking assistance from others to complete assignments."},
      {"Negative Opinion of Own Effort", "The student gives an overall negative opinion of their own effort in the course."},
      {"Constraints from Other Courses", "The student discusses how other courses limit their ability to focus on this one."},
      {"Externalizing Self-Regulation", "The student relies on others (e.g., teaching assistants) for guidance and regulation."},
      {"Personal Life Constraints", "The student brings up additional personal life factors that impose constraints."},
      {"Emphasis on Group Work Benefits", "The student underscores the significance of group work in course completion."},
      {"Irregular Study Habits", "The student mentions irregularity in their study activities."},
      {"Synchronization of Lectures and Assignments", "The student emphasizes the importance of timing between lectures and assignments."},
      {"Challenges in Studying", "The student brings up challenges in studying the course material."},
      {"Deviation from Established Practices", "The student indicates deviating from their usual study practices."},
      {"Work-Related Limitations", "The student mentions employment as a limiting factor in course participation."},
      {"Invested Effort", "The student highlights having invested significant effort into the course."},
      {"Preference for Independent Work", "The student prefers to work alone rather than in groups."},
      {"Deadline-Driven Approach", "The student operates primarily based on deadlines."},
      {"Lecturer-Induced Feelings of Inferiority", "The student recounts an instance where the lecturer caused feelings of inadequacy."},
      {"Random Study Practices", "The student indicates randomness in their study methods."},
      {"Course Workload for Working Students", "The student highlights the demanding nature of the course workload for employed students."},
      {"Dependence on Instructors", "The student's progress depends heavily on instructor guidance and assistance."},
      {"Burnout Due to Workload", "The student expresses burnout resulting from the course workload."},
      {"AI Tools", "The student mentions using AI tools, such as ChatGPT, for assistance."},
      {"Lack of Motivation", "The student expresses a lack of motivation regarding the course."},
      {"Language Barrier Challenges", "The student identifies the language barrier as a challenge during the course."},
      {"Library Documentation", "The student reports using documentation from the Jypeli library for project work."},
      {"Establishing Routine", "The student demonstrates self-regulation by creating a routine for course completion."},
      {"Increasing Independence Over Time", "The student notes enhanced self-regulation as the course progresses."},
      {"Expressed Motivation", "The student conveys motivation toward the course."},
      {"Deliberate Note-Taking", "The student practices self-regulation through conscious note-taking to enhance learning."},
      {"Low Goal Setting", "The student sets low personal goals for the course."},
      {"Social Aspects of the Course", "The student brings up matters related to social interactions in the course."},
      {"Challenge of Transitioning to University", "The student mentions difficulties in transitioning to university-level studies."},
      {"Minimal Effort Invested", "The student notes limited personal investment in the course."},
      {"Concern Over Effort Sufficiency", "The student expresses concern about the adequacy of their effort in the course."},
      {"Adjusting Habits to Course Schedule", "The student adapts their habits to align with the course timetable."},
      {"Awareness of Personal Goals", "The student acknowledges and articulates personal goals for the course."},
  };
  return themes;
}

// ---------------------------------------------------------------- profiles

std::vector<StudentProfile> build_profiles(const std::vector<strategies::StrategyTypeRow>& rows, std::size_t type_count) {
  std::map<std::string, StudentProfile> by_student;
  for (const auto& r : rows) {
    if (r.type_id >= type_count) {
      throw ValidationError(fmt::format("strategy type {} outside 0..{}", r.type_id, type_count - 1));
    }
    auto& p = by_student[r.student];
    if (p.values.empty()) {
      p.student = r.student;
      p.values.assign(type_count, 0.0);
    }
    p.values[r.type_id] += 1.0;
    ++p.weeks_observed;
  }
  std::vector<StudentProfile> out;
  for (auto& [s, p] : by_student) {
    for (auto& v : p.values) v /= static_cast<double>(p.weeks_observed);
    out.push_back(std::move(p));
  }
  return out;
}

std::string profiles_csv(const std::vector<StudentProfile>& profiles, const std::vector<std::string>& type_names) {
  std::vector<std::string> header{"student", "weeks_observed"};
  header.insert(header.end(), type_names.begin(), type_names.end());
  io::CsvWriter w(header);
  for (const auto& p : profiles) {
    std::vector<std::string> row{p.student, std::to_string(p.weeks_observed)};
    for (double v : p.values) row.push_back(io::format_double(v));
    w.add_row(row);
  }
  return w.str();
}

ProfileCatalog ProfileCatalog::default_catalog() {
  ProfileCatalog c;
  c.entries = {
      {"Adaptive understanding seekers",
       "Primarily seek understanding and adapt their strategies as needed.",
       {{"Seeking understanding", 1.0}}},
      {"Diligent course content followers",
       "Use the course materials conscientiously and follow the suggested weekly schedule.",
       {{"Resource-focused, more time on materials than tasks", 1.0}}},
      {"Active task-focused learners", "Focus on completing the weekly tasks with low-risk strategies.",
       {{"Task-oriented, focused on performance", 1.0}, {"@high_risk", -0.5}}},
      {"Persevering until the end", "Outlier relying on high-risk strategies who still completes the course.",
       {{"@singleton", 2.0}, {"Risky focus on mandatory tasks only", 1.0}}},
      {"Course dropouts", "Students who dropped out during the course.", {{"@dropout", 2.0}, {"@high_risk", 1.0}}},
  };
  return c;
}

ProfileCatalog ProfileCatalog::from_json(const nlohmann::json& doc) {
  ProfileCatalog c;
  try {
    for (const auto& e : doc.at("profiles")) {
      ProfileCatalogEntry entry;
      entry.name = e.at("name").get<std::string>();
      entry.description = e.value("description", "");
      const auto signature = e.value("signature", nlohmann::json::object());
      for (const auto& [k, w] : signature.items()) {
        entry.signature.emplace_back(k, w.get<double>());
      }
      c.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(fmt::format("invalid profile catalog: {}", ex.what()));
  }
  return c;
}

nlohmann::json ProfileCatalog::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json sig = nlohmann::json::object();
    for (const auto& [k, w] : e.signature) sig[k] = w;
    arr.push_back({{"name", e.name}, {"description", e.description}, {"signature", sig}});
  }
  return {{"profiles", arr}};
}

ClusterSummary summarize(const std::vector<std::string>& members, const CohortData& data) {
  ClusterSummary s;
  s.n_students = members.size();
  const std::set<std::string> member_set(members.begin(), members.end());
  std::vector<double> task, exam, grade, pdrop;
  for (const auto& m : members) {
    auto it = data.grades.find(m);
    if (it == data.grades.end()) continue;
    task.push_back(it->second.task_pct_after);
    exam.push_back(it->second.exam_pct);
    grade.push_back(it->second.grade);
  }
  for (const auto& r : data.strategies) {
    if (member_set.count(r.student)) pdrop.push_back(r.p_drop);
  }
  s.median_task_pct = median(task);
  s.median_exam_pct = median(exam);
  s.median_grade = median(grade);
  if (!pdrop.empty()) s.mean_p_drop = mean(pdrop);
  s.median_p_drop = median(pdrop);
  const auto answerers = data.reports.answerers();
  std::map<std::string, std::set<std::string>> theme_students;
  for (const auto& t : data.reports.themes) {
    if (member_set.count(t.student)) theme_students[t.theme].insert(t.student);
  }
  for (const auto& m : members) s.answerers += answerers.count(m);
  if (s.answerers > 0) {
    const std::size_t need = (s.answerers + 1) / 2;
    for (const auto& [theme, students] : theme_students) {
      if (students.size() >= need) s.majority_themes.emplace_back(theme, students.size());
    }
    std::stable_sort(s.majority_themes.begin(), s.majority_themes.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
  }
  s.opinions = {{"negative", 0}, {"neutral", 0}, {"positive", 0}, {"absent", 0}};
  for (const auto& m : members) {
    auto it = data.reports.opinions.find(m);
    ++s.opinions[it == data.reports.opinions.end() ? "absent" : to_string(it->second)];
  }
  return s;
}

ProfileClustering cluster_profiles(const std::vector<StudentProfile>& profiles, std::size_t k,
                                   const std::vector<std::string>& type_names,
                                   const std::vector<strategies::Risk>& type_risks, const CohortData& data,
                                   const ProfileCatalog& catalog) {
  if (profiles.size() < k || k == 0) {
    throw ValidationError(fmt::format("cannot form {} profile clusters from {} students", k, profiles.size()));
  }
  const std::size_t dim = profiles.front().values.size();
  clustering::DataMatrix data_matrix(profiles.size(), dim);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (profiles[i].values.size() != dim) throw ValidationError("profiles differ in dimension");
    std::copy(profiles[i].values.begin(), profiles[i].values.end(), data_matrix.row(i).begin());
  }
  auto agg = clustering::agglomerative_complete_l1(data_matrix, k);
  ProfileClustering out;
  out.tree = agg.tree;
  std::vector<ProfileCluster> clusters(k);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    auto& c = clusters[agg.assignment.labels[i]];
    c.members.push_back(profiles[i].student);
    if (c.mean_profile.empty()) c.mean_profile.assign(dim, 0.0);
    for (std::size_t j = 0; j < dim; ++j) c.mean_profile[j] += profiles[i].values[j];
  }
  for (auto& c : clusters) {
    for (auto& v : c.mean_profile) v /= static_cast<double>(c.members.size());
  }
  std::vector<std::size_t> rank(k);
  std::iota(rank.begin(), rank.end(), 0);
  if (catalog.entries.size() == k) {
    std::vector<std::vector<double>> score(k, std::vector<double>(k, 0.0));
    for (std::size_t c = 0; c < k; ++c) {
      std::map<std::string, double> feature;
      for (std::size_t j = 0; j < dim && j < type_names.size(); ++j) {
        feature[type_names[j]] += clusters[c].mean_profile[j];
        if (j < type_risks.size() && type_risks[j] == strategies::Risk::kHigh) {
          feature["@high_risk"] += clusters[c].mean_profile[j];
        }
      }
      feature["@singleton"] = clusters[c].members.size() == 1 ? 1.0 : 0.0;
      double dropped = 0, graded = 0;
      for (const auto& m : clusters[c].members) {
        auto it = data.grades.find(m);
        if (it == data.grades.end()) continue;
        graded += 1;
        dropped += it->second.grade == 0;
      }
      feature["@dropout"] = graded > 0 ? dropped / graded : 0.0;
      for (std::size_t e = 0; e < k; ++e) {
        for (const auto& [key, w] : catalog.entries[e].signature) {
          auto it = feature.find(key);
          if (it != feature.end()) score[c][e] += w * it->second;
        }
      }
    }
    std::vector<bool> used_c(k, false), used_e(k, false);
    for (std::size_t step = 0; step < k; ++step) {
      std::size_t bc = 0, be = 0;
      double best = -1e300;
      for (std::size_t c = 0; c < k; ++c) {
        if (used_c[c]) continue;
        for (std::size_t e = 0; e < k; ++e) {
          if (!used_e[e] && score[c][e] > best) {
            best = score[c][e];
            bc = c;
            be = e;
          }
        }
      }
      used_c[bc] = used_e[be] = true;
      rank[bc] = be;
      clusters[bc].display_name = catalog.entries[be].name;
    }
  } else {
    for (std::size_t c = 0; c < k; ++c) clusters[c].display_name = fmt::format("Profile {}", c + 1);
  }
  out.labels.resize(profiles.size());
  for (std::size_t i = 0; i < profiles.size(); ++i) out.labels[i] = rank[agg.assignment.labels[i]];
  out.clusters.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    clusters[c].cluster_index = rank[c];
    clusters[c].summary = summarize(clusters[c].members, data);
    out.clusters[rank[c]] = std::move(clusters[c]);
  }
  return out;
}

// ------------------------------------------------------------ comparisons

std::string to_string(Variable v) {
  switch (v) {
    case Variable::kGrade: return "grade";
    case Variable::kPDrop: return "p_drop";
    case Variable::kOpinion: return "opinion";
  }
  return "";
}

Comparison compare_cluster(const std::string& name, const std::set<std::string>& members, Variable variable,
                           const CohortData& data, const CompareOptions& options) {
  Comparison c;
  c.cluster = name;
  c.variable = variable;
  std::vector<double> x, y;
  switch (variable) {
    case Variable::kGrade:
      for (const auto& [student, g] : data.grades) {
        if (members.count(student)) {
          x.push_back(g.grade);
        } else if (options.include_dropouts || g.grade != 0) {
          y.push_back(g.grade);
        }
      }
      break;
    case Variable::kPDrop:
      for (const auto& r : data.strategies) (members.count(r.student) ? x : y).push_back(r.p_drop);
      break;
    case Variable::kOpinion:
      for (const auto& [student, o] : data.reports.opinions) {
        (members.count(student) ? x : y).push_back(static_cast<double>(static_cast<int>(o)));
      }
      break;
  }
  if (x.size() < 2 || y.size() < 2) {
    c.reason = fmt::format("not computable: {} observations in cluster, {} outside (need at least 2 each)", x.size(),
                           y.size());
    c.formatted = c.reason;
    c.result.n_x = x.size();
    c.result.n_y = y.size();
    return c;
  }
  BMOptions test = options.test;
  if (std::min(x.size(), y.size()) <= options.permutation_below) test.mode = TestMode::kPermutation;
  c.result = brunner_munzel(x, y, test);
  c.computable = true;
  c.formatted = format_result(c.result);
  return c;
}

std::string comparisons_csv(const std::vector<Comparison>& comparisons) {
  io::CsvWriter w({"cluster", "variable", "computable", "mode", "n_cluster", "n_rest", "statistic", "df", "p_value",
                   "effect", "resamples", "formatted"});
  for (const auto& c : comparisons) {
    const auto& r = c.result;
    w.add_row({c.cluster, to_string(c.variable), c.computable ? "1" : "0", c.computable ? to_string(r.mode) : "",
               std::to_string(r.n_x), std::to_string(r.n_y), c.computable ? io::format_double(r.statistic) : "",
               c.computable && r.df ? io::format_double(*r.df) : "", c.computable ? io::format_double(r.p_value) : "",
               c.computable ? io::format_double(r.effect) : "", std::to_string(r.resamples), c.formatted});
  }
  return w.str();
}

}  // namespace srl::profiling
