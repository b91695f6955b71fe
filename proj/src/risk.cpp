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

#include "srl/risk.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <fmt/core.h>

#include "srl/io.hpp"

namespace srl::risk {
namespace {

constexpr std::array<std::string_view, 6> kCategoryNames{"intro", "basic", "core", "bonus", "guru", "supplementary"};

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct Slice {
  std::vector<std::array<double, kFeatureCount>> x;  // centered
  std::vector<double> y;
  std::vector<double> w;
  double total_weight = 0;
};

// Parameters: [c, w_0..w_{F-1}] on centered features.
using Params = std::array<double, kFeatureCount + 1>;

double objective(const Slice& s, const Params& p, double lambda, Params* grad) {
  double f = 0;
  Params g{};
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    double z = p[0];
    for (std::size_t j = 0; j < kFeatureCount; ++j) z += p[j + 1] * s.x[i][j];
    f += s.w[i] * (softplus(z) - s.y[i] * z);
    if (grad) {
      const double r = s.w[i] * (sigmoid(z) - s.y[i]);
      g[0] += r;
      for (std::size_t j = 0; j < kFeatureCount; ++j) g[j + 1] += r * s.x[i][j];
    }
  }
  f /= s.total_weight;
  double reg = 0;
  for (std::size_t j = 1; j <= kFeatureCount; ++j) reg += p[j] * p[j];
  f += 0.5 * lambda * reg;
  if (grad) {
    for (auto& v : g) v /= s.total_weight;
    for (std::size_t j = 1; j <= kFeatureCount; ++j) g[j] += lambda * p[j];
    *grad = g;
  }
  return f;
}

double norm(const Params& g) {
  double s = 0;
  for (double v : g) s += v * v;
  return std::sqrt(s);
}

}  // namespace

std::string to_string(TaskCategory c) { return std::string(kCategoryNames[static_cast<std::size_t>(c)]); }

TaskCategory parse_category(std::string_view text) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (kCategoryNames[i] == text) return static_cast<TaskCategory>(i);
  }
  throw ValidationError(fmt::format("unknown task category '{}'", text));
}

const Task* CourseSpec::find(std::string_view id) const {
  for (const auto& t : tasks) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

void CourseSpec::validate() const {
  std::set<std::string> ids;
  for (const auto& t : tasks) {
    if (!ids.insert(t.id).second) throw ValidationError(fmt::format("duplicate task id '{}'", t.id));
    if (t.week < 1 || t.week > week_count()) {
      throw ValidationError(fmt::format("task '{}' has week {} outside 1..{}", t.id, t.week, week_count()));
    }
    if (!(t.points >= 0)) throw ValidationError(fmt::format("task '{}' has negative points", t.id));
  }
}

CourseSpec CourseSpec::from_json(const nlohmann::json& doc) {
  CourseSpec spec;
  try {
    spec.calendar = ingest::CourseCalendar::weekly(parse_date(doc.at("first_week_start").get<std::string>()),
                                                   doc.at("week_count").get<int>(),
                                                   doc.value("utc_offset_minutes", 0));
    for (const auto& t : doc.at("tasks")) {
      spec.tasks.push_back({t.at("id").get<std::string>(), t.at("week").get<int>(),
                            parse_category(t.at("category").get<std::string>()), t.value("points", 1.0)});
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(fmt::format("invalid course spec: {}", ex.what()));
  }
  spec.validate();
  return spec;
}

nlohmann::json CourseSpec::to_json() const {
  nlohmann::json tasks_json = nlohmann::json::array();
  for (const auto& t : tasks) {
    tasks_json.push_back({{"id", t.id}, {"week", t.week}, {"category", to_string(t.category)}, {"points", t.points}});
  }
  return {{"first_week_start", format_date(calendar.week_starts().front())},
          {"week_count", week_count()},
          {"utc_offset_minutes", calendar.utc_offset_minutes()},
          {"tasks", tasks_json}};
}

std::vector<SubmissionRecord> parse_submissions_csv(std::string_view text) {
  const auto table = io::CsvTable::parse(text);
  table.require_columns({"timestamp", "student", "week", "task_id", "category", "correct"});
  std::vector<SubmissionRecord> out;
  out.reserve(table.rows().size());
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    try {
      SubmissionRecord s;
      s.timestamp = parse_iso_timestamp(table.at(r, "timestamp"));
      s.student = table.at(r, "student");
      s.week = static_cast<int>(io::parse_int(table.at(r, "week")));
      s.task_id = table.at(r, "task_id");
      s.category = parse_category(table.at(r, "category"));
      const auto& c = table.at(r, "correct");
      if (c == "1" || c == "true") {
        s.correct = true;
      } else if (c == "0" || c == "false") {
        s.correct = false;
      } else {
        throw ValidationError(fmt::format("correct must be 0/1, got '{}'", c));
      }
      out.push_back(std::move(s));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("submissions row {}: {}", r + 2, e.what()));
    }
  }
  return out;
}

std::string submissions_csv(const std::vector<SubmissionRecord>& records) {
  io::CsvWriter w({"timestamp", "student", "week", "task_id", "category", "correct"});
  for (const auto& s : records) {
    w.add_row({format_iso_timestamp(s.timestamp), s.student, std::to_string(s.week), s.task_id,
               to_string(s.category), s.correct ? "1" : "0"});
  }
  return w.str();
}

std::vector<GradeRecord> parse_grades_csv(std::string_view text) {
  const auto table = io::CsvTable::parse(text);
  table.require_columns({"student", "task_pct_before", "task_pct_after", "exam_pct", "grade"});
  std::vector<GradeRecord> out;
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    GradeRecord g;
    g.student = table.at(r, "student");
    g.task_pct_before = io::parse_double(table.at(r, "task_pct_before"));
    g.task_pct_after = io::parse_double(table.at(r, "task_pct_after"));
    g.exam_pct = io::parse_double(table.at(r, "exam_pct"));
    g.grade = static_cast<int>(io::parse_int(table.at(r, "grade")));
    if (g.grade < 0 || g.grade > 5) throw ValidationError(fmt::format("grades row {}: grade outside 0..5", r + 2));
    out.push_back(std::move(g));
  }
  return out;
}

std::string grades_csv(const std::vector<GradeRecord>& records) {
  io::CsvWriter w({"student", "task_pct_before", "task_pct_after", "exam_pct", "grade"});
  for (const auto& g : records) {
    w.add_row({g.student, io::format_double(g.task_pct_before), io::format_double(g.task_pct_after),
               io::format_double(g.exam_pct), std::to_string(g.grade)});
  }
  return w.str();
}

WeeklyFeatureVector extract_features(std::span<const SubmissionRecord> submissions, int week, const CourseSpec& spec) {
  if (week < 1 || week > spec.week_count()) {
    throw ValidationError(fmt::format("week {} outside 1..{}", week, spec.week_count()));
  }
  const Timestamp deadline = spec.deadline(week);
  std::set<std::string> solved;
  double attempts = 0, correct = 0;
  for (const auto& s : submissions) {
    if (s.timestamp >= deadline || s.week > week) continue;
    attempts += 1;
    if (s.correct) {
      correct += 1;
      solved.insert(s.task_id);
    }
  }
  double core_total = 0, core_done = 0, basic_total = 0, basic_done = 0, points_total = 0, points_done = 0;
  for (const auto& t : spec.tasks) {
    if (t.week > week) continue;
    const bool done = solved.count(t.id) > 0;
    if (t.category == TaskCategory::kCore) {
      core_total += 1;
      core_done += done;
    } else if (t.category == TaskCategory::kBasic) {
      basic_total += 1;
      basic_done += done;
    }
    if (t.week == week) {
      points_total += t.points;
      if (done) points_done += t.points;
    }
  }
  WeeklyFeatureVector f;
  f.values[0] = core_total > 0 ? core_done / core_total : 0.0;
  f.values[1] = basic_total > 0 ? basic_done / basic_total : 0.0;
  f.values[2] = points_total > 0 ? points_done / points_total : 0.0;
  f.values[3] = std::log1p(attempts);
  f.values[4] = attempts > 0 ? correct / attempts : 0.0;
  return f;
}

std::vector<TrainingExample> build_training_set(const std::vector<SubmissionRecord>& submissions,
                                                const std::vector<GradeRecord>& grades, const CourseSpec& spec) {
  std::map<std::string, std::vector<SubmissionRecord>> by_student;
  for (const auto& s : submissions) by_student[s.student].push_back(s);
  std::vector<TrainingExample> out;
  for (const auto& g : grades) {
    const auto it = by_student.find(g.student);
    const std::span<const SubmissionRecord> subs =
        it == by_student.end() ? std::span<const SubmissionRecord>{} : std::span<const SubmissionRecord>(it->second);
    for (int w = 1; w <= spec.week_count(); ++w) {
      out.push_back({g.student, w, extract_features(subs, w, spec), g.grade == 0, 1.0});
    }
  }
  return out;
}

double WeekModel::baseline() const {
  double b = intercept;
  for (std::size_t j = 0; j < kFeatureCount; ++j) b += weights[j] * means[j];
  return b;
}

const WeekModel& RiskModel::week(int week_index) const {
  for (const auto& w : weeks) {
    if (w.week == week_index) return w;
  }
  throw ValidationError(fmt::format("risk model has no coefficients for week {}", week_index));
}

nlohmann::json RiskModel::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& w : weeks) {
    arr.push_back({{"week", w.week},
                   {"weights", w.weights},
                   {"intercept", w.intercept},
                   {"means", w.means},
                   {"iterations", w.iterations},
                   {"converged", w.converged},
                   {"gradient_norm", w.gradient_norm},
                   {"training_auc", w.training_auc},
                   {"examples", w.examples}});
  }
  std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
  return {{"features", names},
          {"weeks", arr},
          {"training", {{"lambda", config.lambda}, {"tol", config.tol}, {"max_iter", config.max_iter}, {"seed", config.seed}}},
          {"label", label_definition}};
}

RiskModel RiskModel::from_json(const nlohmann::json& doc) {
  RiskModel m;
  try {
    const auto names = doc.at("features").get<std::vector<std::string>>();
    if (names != std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end())) {
      throw ValidationError("risk model feature list does not match this build");
    }
    for (const auto& w : doc.at("weeks")) {
      WeekModel wm;
      wm.week = w.at("week").get<int>();
      wm.weights = w.at("weights").get<std::array<double, kFeatureCount>>();
      wm.intercept = w.at("intercept").get<double>();
      wm.means = w.at("means").get<std::array<double, kFeatureCount>>();
      wm.iterations = w.value("iterations", std::size_t{0});
      wm.converged = w.value("converged", false);
      wm.gradient_norm = w.value("gradient_norm", 0.0);
      wm.training_auc = w.value("training_auc", 0.0);
      wm.examples = w.value("examples", std::size_t{0});
      for (double v : wm.weights) {
        if (!std::isfinite(v)) throw ValidationError(fmt::format("week {} has non-finite weights", wm.week));
      }
      m.weeks.push_back(std::move(wm));
    }
    const auto& t = doc.at("training");
    m.config.lambda = t.at("lambda").get<double>();
    m.config.tol = t.at("tol").get<double>();
    m.config.max_iter = t.at("max_iter").get<std::size_t>();
    m.config.seed = t.at("seed").get<std::uint64_t>();
    m.label_definition = doc.value("label", m.label_definition);
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(fmt::format("invalid risk model: {}", ex.what()));
  }
  return m;
}

WeekModel train_week(std::span<const TrainingExample> examples, int week, const TrainConfig& config) {
  Slice s;
  WeekModel m;
  m.week = week;
  bool has_pos = false, has_neg = false;
  for (const auto& e : examples) {
    if (e.week != week) continue;
    if (!(e.weight > 0)) continue;
    s.total_weight += e.weight;
    for (std::size_t j = 0; j < kFeatureCount; ++j) m.means[j] += e.weight * e.features.values[j];
    (e.dropped ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) {
    throw ValidationError(fmt::format("training data for week {} contains a single class", week));
  }
  for (auto& v : m.means) v /= s.total_weight;
  for (const auto& e : examples) {
    if (e.week != week || !(e.weight > 0)) continue;
    std::array<double, kFeatureCount> x{};
    for (std::size_t j = 0; j < kFeatureCount; ++j) x[j] = e.features.values[j] - m.means[j];
    s.x.push_back(x);
    s.y.push_back(e.dropped ? 1.0 : 0.0);
    s.w.push_back(e.weight);
  }
  m.examples = s.x.size();
  Params p{};
  Params g{};
  double f = objective(s, p, config.lambda, &g);
  m.objective_trace.push_back(f);
  double step = 1.0;
  for (m.iterations = 0; m.iterations < config.max_iter; ++m.iterations) {
    const double gn = norm(g);
    if (gn < config.tol) {
      m.converged = true;
      break;
    }
    bool accepted = false;
    while (step > 1e-30) {
      Params q = p;
      for (std::size_t j = 0; j < q.size(); ++j) q[j] -= step * g[j];
      Params gq{};
      const double fq = objective(s, q, config.lambda, &gq);
      if (fq <= f - 1e-4 * step * gn * gn) {
        p = q;
        f = fq;
        g = gq;
        accepted = true;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    m.objective_trace.push_back(f);
  }
  m.gradient_norm = norm(g);
  if (m.gradient_norm < config.tol) m.converged = true;
  for (std::size_t j = 0; j < kFeatureCount; ++j) m.weights[j] = p[j + 1];
  double intercept = p[0];
  for (std::size_t j = 0; j < kFeatureCount; ++j) intercept -= m.weights[j] * m.means[j];
  m.intercept = intercept;
  std::vector<double> scores;
  std::vector<bool> labels;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    double z = p[0];
    for (std::size_t j = 0; j < kFeatureCount; ++j) z += p[j + 1] * s.x[i][j];
    scores.push_back(z);
    labels.push_back(s.y[i] > 0.5);
  }
  m.training_auc = auc(scores, labels);
  return m;
}

RiskModel train(const std::vector<TrainingExample>& history, const TrainConfig& config) {
  if (!(config.lambda >= 0) || !(config.tol > 0) || config.max_iter == 0) {
    throw ValidationError("invalid training configuration");
  }
  std::set<int> weeks;
  for (const auto& e : history) weeks.insert(e.week);
  if (weeks.empty()) throw ValidationError("training history is empty");
  RiskModel model;
  model.config = config;
  for (int w : weeks) model.weeks.push_back(train_week(history, w, config));
  return model;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> linear_shapley(std::span<const double> weights, std::span<const double> means,
                                   std::span<const double> x) {
  if (weights.size() != means.size() || weights.size() != x.size()) {
    throw ValidationError("linear_shapley needs weights, means and features of equal length");
  }
  std::vector<double> phi(weights.size());
  for (std::size_t j = 0; j < phi.size(); ++j) phi[j] = weights[j] * (x[j] - means[j]);
  return phi;
}

Explanation explain(const RiskModel& model, const WeeklyFeatureVector& features, int week_index) {
  const WeekModel& m = model.week(week_index);
  Explanation e;
  e.week = week_index;
  e.baseline = m.baseline();
  e.features = features.values;
  const auto phi = linear_shapley(m.weights, m.means, features.values);
  e.logit = e.baseline;
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    e.contributions[j] = phi[j];
    e.logit += phi[j];
  }
  e.probability = sigmoid(e.logit);
  std::iota(e.order.begin(), e.order.end(), 0);
  std::stable_sort(e.order.begin(), e.order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(e.contributions[a]) > std::abs(e.contributions[b]);
  });
  return e;
}

double predict_week(const RiskModel& model, const WeeklyFeatureVector& features, int week_index) {
  return explain(model, features, week_index).probability;
}

nlohmann::json explanation_to_json(const Explanation& e) {
  nlohmann::json contributions = nlohmann::json::array();
  for (auto j : e.order) {
    contributions.push_back(
        {{"feature", std::string(kFeatureNames[j])}, {"value", e.features[j]}, {"contribution", e.contributions[j]}});
  }
  return {{"week", e.week},
          {"baseline", e.baseline},
          {"contributions", contributions},
          {"logit", e.logit},
          {"p_drop", e.probability}};
}

std::string waterfall_svg(const Explanation& e) {
  // Horizontal waterfall on the logit scale, largest contribution on top.
  double lo = std::min(e.baseline, e.logit), hi = std::max(e.baseline, e.logit);
  double running = e.baseline;
  for (auto j : e.order) {
    running += e.contributions[j];
    lo = std::min(lo, running);
    hi = std::max(hi, running);
  }
  if (hi - lo < 1e-9) {
    lo -= 1;
    hi += 1;
  }
  const double label_w = 220, plot_w = 360, row_h = 26, width = label_w + plot_w + 100;
  auto x = [&](double v) { return label_w + plot_w * (v - lo) / (hi - lo); };
  std::string body;
  double y = 30;
  running = e.baseline;
  body += fmt::format(
      "<text x=\"{:.1f}\" y=\"18\" font-size=\"12\">E[f(x)] = {:.3f} (logit), p = {:.3f}</text>\n", label_w,
      e.baseline, sigmoid(e.baseline));
  for (auto j : e.order) {
    const double from = running, to = running + e.contributions[j];
    const double x0 = x(std::min(from, to)), x1 = x(std::max(from, to));
    const char* color = e.contributions[j] >= 0 ? "#d62728" : "#1f77b4";
    body += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\" font-size=\"12\">{} = {}</text>\n",
                        label_w - 6, y + 15, kFeatureNames[j], io::format_double(std::round(e.features[j] * 1000) / 1000));
    body += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\"/>\n", x0, y + 3,
                        std::max(x1 - x0, 1.0), row_h - 8, color);
    body += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"11\">{:+.3f}</text>\n", x1 + 4, y + 15,
                        e.contributions[j]);
    running = to;
    y += row_h;
  }
  body += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"12\">f(x) = {:.3f} (logit), p_drop = {:.3f}</text>\n",
                      label_w, y + 16, e.logit, e.probability);
  body += fmt::format("<line x1=\"{0:.1f}\" y1=\"24\" x2=\"{0:.1f}\" y2=\"{1:.1f}\" stroke=\"#888\" stroke-dasharray=\"3,3\"/>\n",
                      x(e.baseline), y);
  return fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\">\n{}</svg>\n", width,
                     y + 30, body);
}

double auc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw ValidationError("score and label counts differ");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Rank-sum with midranks.
  double rank_sum = 0, n_pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (positive[idx[t]]) {
        rank_sum += mid;
        n_pos += 1;
      }
    }
    i = j;
  }
  const double n_neg = static_cast<double>(scores.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) return 0.5;
  return (rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg);
}

std::vector<RiskScore> score_cohort(const RiskModel& model, const std::vector<SubmissionRecord>& submissions,
                                    const std::vector<std::string>& students, const CourseSpec& spec) {
  std::map<std::string, std::vector<SubmissionRecord>> by_student;
  for (const auto& s : submissions) by_student[s.student].push_back(s);
  std::vector<RiskScore> out;
  for (const auto& student : students) {
    const auto it = by_student.find(student);
    const std::span<const SubmissionRecord> subs =
        it == by_student.end() ? std::span<const SubmissionRecord>{} : std::span<const SubmissionRecord>(it->second);
    for (int w = 1; w <= spec.week_count(); ++w) {
      RiskScore r;
      r.student = student;
      r.week = w;
      r.features = extract_features(subs, w, spec);
      r.p_drop = predict_week(model, r.features, w);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::string risk_scores_csv(const std::vector<RiskScore>& scores) {
  std::vector<std::string> header{"student", "week", "p_drop"};
  for (auto n : kFeatureNames) header.emplace_back(n);
  io::CsvWriter w(header);
  for (const auto& s : scores) {
    std::vector<std::string> row{s.student, std::to_string(s.week), io::format_double(s.p_drop)};
    for (double v : s.features.values) row.push_back(io::format_double(v));
    w.add_row(row);
  }
  return w.str();
}

std::vector<RiskScore> parse_risk_scores_csv(std::string_view text) {
  const auto table = io::CsvTable::parse(text);
  table.require_columns({"student", "week", "p_drop"});
  std::vector<RiskScore> out;
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    RiskScore s;
    s.student = table.at(r, "student");
    s.week = static_cast<int>(io::parse_int(table.at(r, "week")));
    s.p_drop = io::parse_double(table.at(r, "p_drop"));
    if (!(s.p_drop >= 0 && s.p_drop <= 1)) throw ValidationError(fmt::format("risk row {}: p_drop outside [0,1]", r + 2));
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      s.features.values[j] = io::parse_double(table.at(r, kFeatureNames[j]));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace srl::risk
