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

#include "srl/ingest.hpp"

#include <algorithm>
#include <array>
#include <tuple>

#include <fmt/core.h>

namespace srl::ingest {
namespace {

using namespace std::chrono;

constexpr std::array<std::string_view, 3> kRelativeTokens = {"prev", "cur",
                                                             "next"};

void add_family(std::vector<std::string>& out, std::string_view prefix,
                std::initializer_list<std::string_view> variants,
                std::string_view suffix) {
  for (auto v : variants) {
    out.push_back(fmt::format("{}{}{}", prefix, v, suffix));
  }
}

std::vector<std::string> default_codes() {
  std::vector<std::string> c;
  c.push_back("answer-wrong:lecture-cur-wk-example");
  c.push_back("answer-wrong:materials-book-example");
  for (auto cat : {"self-assessment", "intro", "basic", "core", "bonus", "guru"}) {
    add_family(c, "answer-wrong:tasks-", {"prev", "cur"},
               fmt::format("-{}", cat));
  }
  add_family(c, "answer-wrong:tasks-", {"prev", "cur", "extra", "supp"},
             "-supplementary");
  add_family(c, "answer:lecture-", {"prev", "cur", "next"}, "-wk-example");
  c.push_back("answer:materials-book-example");
  for (auto cat : {"self-assessment", "intro", "basic", "core", "bonus", "guru"}) {
    add_family(c, "answer:tasks-", {"prev", "cur", "next"},
               fmt::format("-{}", cat));
  }
  add_family(c, "answer:tasks-", {"prev", "cur", "next", "extra", "supp"},
             "-supplementary");
  add_family(c, "check-model-answer:tasks-", {"prev", "cur"}, "-basic");
  add_family(c, "check-model-answer:tasks-", {"prev", "cur"}, "-core");
  for (auto cat : {"bonus", "guru", "intro", "supplementary"}) {
    c.push_back(fmt::format("check-model-answer:tasks-prev-{}", cat));
  }
  c.push_back("join-lecture:lecture-cur-wk");
  c.push_back("leave-lecture:lecture-cur-wk");
  c.push_back("read:lecture-all");
  c.push_back("read:lecuture-cur");
  add_family(c, "read:lecture-", {"prev", "cur", "next"}, "-wk");
  c.push_back("read:materials-book");
  c.push_back("read:tasks");
  for (auto s : {"cur", "extra", "next", "prev", "pre", "review", "supp"}) {
    c.push_back(fmt::format("read:tasks-{}", s));
  }
  c.push_back("session-start:None");
  c.push_back("session-end:None");
  add_family(c, "watch-video:lecture-", {"prev", "cur"}, "-wk");
  add_family(c, "watch-video:tasks-review-", {"prev", "cur", "next"}, "");
  c.push_back("workshop-start:None");
  c.push_back("workshop-end:None");
  return c;
}

std::vector<std::string> json_strings(const nlohmann::json& doc,
                                      const char* key) {
  if (!doc.contains(key)) return {};
  if (!doc.at(key).is_array()) {
    throw ValidationError(fmt::format("registry field '{}' must be an array", key));
  }
  return doc.at(key).get<std::vector<std::string>>();
}

bool match_from(std::string_view p, std::string_view t, std::optional<int>* week) {
  static constexpr std::string_view kWeek = "{week}";
  while (!p.empty()) {
    if (p.front() == '*') {
      p.remove_prefix(1);
      for (std::size_t skip = 0; skip <= t.size(); ++skip) {
        if (match_from(p, t.substr(skip), week)) return true;
      }
      return false;
    }
    if (p.substr(0, kWeek.size()) == kWeek) {
      std::size_t n = 0;
      while (n < t.size() && t[n] >= '0' && t[n] <= '9') ++n;
      // Longest digit run first; backtrack to shorter runs.
      for (std::size_t len = std::min<std::size_t>(n, 6); len >= 1; --len) {
        if (match_from(p.substr(kWeek.size()), t.substr(len), week)) {
          if (week != nullptr) {
            int value = 0;
            for (std::size_t i = 0; i < len; ++i) value = value * 10 + (t[i] - '0');
            *week = value;
          }
          return true;
        }
      }
      return false;
    }
    if (t.empty() || p.front() != t.front()) return false;
    p.remove_prefix(1);
    t.remove_prefix(1);
  }
  return t.empty();
}

bool has_wildcards(std::string_view pattern) {
  return pattern.find('*') != std::string_view::npos ||
         pattern.find("{week}") != std::string_view::npos;
}

std::string replace_week(std::string_view tmpl, std::string_view value) {
  std::string out(tmpl);
  const auto pos = out.find("{week}");
  if (pos != std::string::npos) out.replace(pos, 6, value);
  return out;
}

Timestamp local_midnight_utc(sys_days day, int offset_minutes) {
  return Timestamp{day} - minutes{offset_minutes};
}

}  // namespace

RawLogLine parse_raw_line(std::string_view line) {
  if (line.empty()) throw ParseError("empty line", 0);
  if (line.find('\n') != std::string_view::npos) {
    throw ParseError("line contains a newline", line.find('\n'));
  }
  if (line.size() < 23) throw ParseError("line shorter than a timestamp", line.size());
  RawLogLine out;
  out.timestamp = parse_raw_timestamp(line.substr(0, 23));
  static constexpr std::string_view kLevel = " INFO: ";
  if (line.substr(23, kLevel.size()) != kLevel) {
    throw ParseError("expected ' INFO: ' after timestamp", 23);
  }
  const std::size_t user_begin = 23 + kLevel.size();
  const std::size_t bracket = line.find(" [", user_begin);
  if (bracket == std::string_view::npos) {
    throw ParseError("missing ' [' before client address", line.size());
  }
  if (bracket == user_begin) throw ParseError("empty username", user_begin);
  out.username = std::string(line.substr(user_begin, bracket - user_begin));
  if (out.username.find_first_of(" ;\t") != std::string::npos) {
    throw ParseError("username contains a separator",
                     user_begin + out.username.find_first_of(" ;\t"));
  }
  const std::size_t close = line.find("]: ", bracket + 2);
  if (close == std::string_view::npos) {
    throw ParseError("missing ']: ' after client address", bracket + 2);
  }
  out.client_address = std::string(line.substr(bracket + 2, close - bracket - 2));
  const std::size_t action_begin = close + 3;
  if (action_begin >= line.size()) throw ParseError("empty action", action_begin);
  out.action = std::string(line.substr(action_begin));
  if (out.action.back() == '\r') out.action.pop_back();
  if (out.action.empty()) throw ParseError("empty action", action_begin);
  return out;
}

std::string format_raw_line(const RawLogLine& line) {
  return fmt::format("{} INFO: {} [{}]: {}", format_raw_timestamp(line.timestamp),
                     line.username, line.client_address, line.action);
}

std::string_view to_string(RelativeWeek week) {
  return kRelativeTokens[static_cast<std::size_t>(week)];
}

RelativeWeek relative_week(int tag_week, int current_week) {
  if (tag_week < current_week) return RelativeWeek::kPrev;
  if (tag_week > current_week) return RelativeWeek::kNext;
  return RelativeWeek::kCur;
}

EventCodeRegistry::EventCodeRegistry(std::vector<std::string> codes,
                                     std::vector<std::string> week_sensitive,
                                     std::vector<std::string> merge_debounced)
    : codes_(std::move(codes)) {
  if (codes_.empty()) throw ValidationError("registry has no codes");
  for (std::size_t i = 0; i < codes_.size(); ++i) {
    if (codes_[i].empty() || codes_[i].find_first_of("; \t\n") != std::string::npos) {
      throw ValidationError(fmt::format("invalid event code '{}'", codes_[i]));
    }
    if (!index_.emplace(codes_[i], i).second) {
      throw ValidationError(fmt::format("duplicate event code '{}'", codes_[i]));
    }
  }
  for (auto& c : week_sensitive) {
    if (!contains(c)) {
      throw ValidationError(fmt::format("week-sensitive code '{}' not in registry", c));
    }
    if (!week_template(c)) {
      throw ValidationError(fmt::format("week-sensitive code '{}' has no prev/cur/next segment", c));
    }
    week_sensitive_.insert(std::move(c));
  }
  for (auto& c : merge_debounced) {
    if (!contains(c)) {
      throw ValidationError(fmt::format("debounced code '{}' not in registry", c));
    }
    debounced_.insert(std::move(c));
  }
}

EventCodeRegistry EventCodeRegistry::default_registry() {
  auto codes = default_codes();
  std::vector<std::string> sensitive;
  std::vector<std::string> debounced;
  for (const auto& c : codes) {
    if (week_template(c)) sensitive.push_back(c);
    if (c.rfind("read:", 0) == 0) debounced.push_back(c);
  }
  return EventCodeRegistry(std::move(codes), std::move(sensitive),
                           std::move(debounced));
}

EventCodeRegistry EventCodeRegistry::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("registry must be a JSON object");
  return EventCodeRegistry(json_strings(doc, "codes"),
                           json_strings(doc, "week_sensitive"),
                           json_strings(doc, "merge_debounced"));
}

nlohmann::json EventCodeRegistry::to_json() const {
  nlohmann::json doc;
  doc["codes"] = codes_;
  std::vector<std::string> sensitive;
  std::vector<std::string> debounced;
  for (const auto& c : codes_) {
    if (week_sensitive_.count(c)) sensitive.push_back(c);
    if (debounced_.count(c)) debounced.push_back(c);
  }
  doc["week_sensitive"] = sensitive;
  doc["merge_debounced"] = debounced;
  return doc;
}

std::optional<std::size_t> EventCodeRegistry::index_of(std::string_view code) const {
  auto it = index_.find(std::string(code));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool EventCodeRegistry::is_week_sensitive(std::string_view code) const {
  return week_sensitive_.count(std::string(code)) > 0;
}

bool EventCodeRegistry::is_debounced(std::string_view code) const {
  return debounced_.count(std::string(code)) > 0;
}

std::optional<std::string> EventCodeRegistry::week_template(std::string_view code) {
  const auto colon = code.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  std::size_t seg_begin = colon + 1;
  while (seg_begin <= code.size()) {
    std::size_t seg_end = code.find('-', seg_begin);
    if (seg_end == std::string_view::npos) seg_end = code.size();
    const auto seg = code.substr(seg_begin, seg_end - seg_begin);
    for (auto token : kRelativeTokens) {
      if (seg == token) {
        std::string out(code);
        out.replace(seg_begin, seg.size(), "{week}");
        return out;
      }
    }
    seg_begin = seg_end + 1;
  }
  return std::nullopt;
}

std::string EventCodeRegistry::instantiate(std::string_view tmpl, RelativeWeek week) {
  return replace_week(tmpl, to_string(week));
}

CourseCalendar::CourseCalendar(std::vector<sys_days> week_starts,
                               int utc_offset_minutes)
    : week_starts_(std::move(week_starts)),
      utc_offset_minutes_(utc_offset_minutes) {
  if (week_starts_.empty()) throw ValidationError("calendar needs at least one week");
  for (std::size_t i = 1; i < week_starts_.size(); ++i) {
    if (week_starts_[i] <= week_starts_[i - 1]) {
      throw ValidationError(fmt::format(
          "calendar week {} does not start after week {}", i + 1, i));
    }
  }
}

CourseCalendar CourseCalendar::from_csv(std::string_view text,
                                        int utc_offset_minutes) {
  auto table = io::CsvTable::parse(text);
  table.require_columns({"week_index", "start_date"});
  std::vector<std::pair<long long, sys_days>> rows;
  for (std::size_t r = 0; r < table.size(); ++r) {
    rows.emplace_back(io::parse_int(table.at(r, "week_index")),
                      parse_date(table.at(r, "start_date")));
  }
  std::sort(rows.begin(), rows.end());
  std::vector<sys_days> starts;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != static_cast<long long>(i + 1)) {
      throw ValidationError("calendar week indices must be 1..n without gaps");
    }
    starts.push_back(rows[i].second);
  }
  return CourseCalendar(std::move(starts), utc_offset_minutes);
}

std::string CourseCalendar::to_csv() const {
  io::CsvWriter w({"week_index", "start_date"});
  for (std::size_t i = 0; i < week_starts_.size(); ++i) {
    w.add_row({std::to_string(i + 1), format_date(week_starts_[i])});
  }
  return w.str();
}

CourseCalendar CourseCalendar::weekly(sys_days first, int count,
                                      int utc_offset_minutes) {
  std::vector<sys_days> starts;
  for (int i = 0; i < count; ++i) starts.push_back(first + days{7 * i});
  return CourseCalendar(std::move(starts), utc_offset_minutes);
}

Timestamp CourseCalendar::week_start(int week) const {
  return local_midnight_utc(week_starts_.at(static_cast<std::size_t>(week - 1)),
                            utc_offset_minutes_);
}

Timestamp CourseCalendar::week_end(int week) const {
  if (week < week_count()) return week_start(week + 1);
  return week_start(week) + days{7};
}

std::optional<int> CourseCalendar::week_of(Timestamp ts) const {
  std::optional<int> found;
  for (int w = 1; w <= week_count(); ++w) {
    if (week_start(w) <= ts) found = w;
    else break;
  }
  return found;
}

std::string format_trace_line(const TraceEvent& event) {
  if (event.week_tag) {
    throw Error("cannot serialize an event that still carries a week tag");
  }
  return fmt::format("{};{};{}", format_iso_timestamp(event.timestamp),
                     event.student, event.code);
}

TraceEvent parse_trace_line(std::string_view line) {
  const auto first = line.find(';');
  if (first == std::string_view::npos) throw ParseError("missing ';'", line.size());
  const auto second = line.find(';', first + 1);
  if (second == std::string_view::npos) {
    throw ParseError("missing second ';'", line.size());
  }
  TraceEvent e;
  try {
    e.timestamp = parse_iso_timestamp(line.substr(0, first));
  } catch (const ParseError& err) {
    throw ParseError("bad trace timestamp", err.offset());
  }
  e.student = std::string(line.substr(first + 1, second - first - 1));
  if (e.student.empty()) throw ParseError("empty student", first + 1);
  e.code = std::string(line.substr(second + 1));
  if (e.code.empty()) throw ParseError("empty event code", second + 1);
  if (e.code.find(';') != std::string::npos) {
    throw ParseError("extra ';' in event code", second + 1 + e.code.find(';'));
  }
  return e;
}

std::string format_trace_log(const std::vector<TraceEvent>& events) {
  std::string out;
  out.reserve(events.size() * 64);
  for (const auto& e : events) {
    out += format_trace_line(e);
    out += '\n';
  }
  return out;
}

std::vector<TraceEvent> parse_trace_log(std::string_view text) {
  std::vector<TraceEvent> events;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    const auto line = text.substr(pos, nl - pos);
    if (!line.empty()) {
      try {
        events.push_back(parse_trace_line(line));
      } catch (const ParseError& e) {
        throw ParseError(fmt::format("trace line {}: {}", line_no, e.what()),
                         e.offset());
      }
    }
    pos = nl + 1;
  }
  return events;
}

bool glob_match(std::string_view pattern, std::string_view text,
                std::optional<int>* week) {
  return match_from(pattern, text, week);
}

RuleTable::RuleTable(std::vector<ActionRule> rules) : rules_(std::move(rules)) {
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const auto& r = rules_[i];
    if (r.pattern.empty() || r.code.empty()) {
      throw ValidationError(fmt::format("rule {} has an empty pattern or code", i));
    }
    const bool pattern_week = r.pattern.find("{week}") != std::string::npos;
    const bool code_week = r.code.find("{week}") != std::string::npos;
    if (pattern_week != code_week) {
      throw ValidationError(fmt::format(
          "rule '{}': {{week}} must appear in both pattern and code", r.pattern));
    }
    if (has_wildcards(r.pattern)) {
      wildcard_.push_back(i);
    } else {
      literal_.emplace(r.pattern, i);  // first occurrence wins
    }
  }
}

std::optional<RuleMatch> RuleTable::match(std::string_view action) const {
  // Literal rules only take precedence over wildcard rules listed after them.
  std::size_t best = rules_.size();
  if (auto it = literal_.find(std::string(action)); it != literal_.end()) {
    best = it->second;
  }
  for (std::size_t i : wildcard_) {
    if (i >= best) break;
    std::optional<int> week;
    if (glob_match(rules_[i].pattern, action, &week)) {
      return RuleMatch{rules_[i].code, week};
    }
  }
  if (best < rules_.size()) return RuleMatch{rules_[best].code, std::nullopt};
  return std::nullopt;
}

void RuleTable::validate(const EventCodeRegistry& registry) const {
  for (const auto& r : rules_) {
    if (r.code.find("{week}") != std::string::npos) {
      bool any = false;
      for (auto w : {RelativeWeek::kPrev, RelativeWeek::kCur, RelativeWeek::kNext}) {
        const auto code = EventCodeRegistry::instantiate(r.code, w);
        if (registry.contains(code)) {
          any = true;
          if (!registry.is_week_sensitive(code)) {
            throw ValidationError(fmt::format(
                "rule '{}' yields '{}', which is not week-sensitive", r.pattern, code));
          }
        }
      }
      if (!any) {
        throw ValidationError(fmt::format(
            "rule '{}' maps to template '{}' with no registry code", r.pattern, r.code));
      }
    } else if (!registry.contains(r.code)) {
      throw ValidationError(fmt::format("rule '{}' maps to unknown code '{}'",
                                        r.pattern, r.code));
    }
  }
}

std::string RuleTable::example_action(std::string_view code, int absolute_week) const {
  const auto tmpl = EventCodeRegistry::week_template(code);
  for (const auto& r : rules_) {
    if (r.example.empty()) continue;
    if (r.code == code) return r.example;
    if (tmpl && r.code == *tmpl) {
      return replace_week(r.example, std::to_string(absolute_week));
    }
  }
  throw ValidationError(fmt::format("no rule produces code '{}'", code));
}

RuleTable RuleTable::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("rules") || !doc.at("rules").is_array()) {
    throw ValidationError("rule table must be an object with a 'rules' array");
  }
  std::vector<ActionRule> rules;
  for (const auto& r : doc.at("rules")) {
    rules.push_back(ActionRule{r.at("pattern").get<std::string>(),
                               r.at("code").get<std::string>(),
                               r.value("example", std::string{})});
  }
  return RuleTable(std::move(rules));
}

nlohmann::json RuleTable::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rules_) {
    arr.push_back({{"pattern", r.pattern}, {"code", r.code}, {"example", r.example}});
  }
  return {{"rules", arr}};
}

RuleTable RuleTable::default_rules() {
  std::vector<ActionRule> r;
  auto add = [&r](std::string pattern, std::string code, std::string example) {
    r.push_back({std::move(pattern), std::move(code), std::move(example)});
  };
  add("VIEW_DOC/book*", "read:materials-book", "VIEW_DOC/book/chapter-3");
  add("VIEW_DOC/lectures", "read:lecture-all", "VIEW_DOC/lectures");
  add("VIEW_DOC/lectures/live/week{week}", "read:lecuture-{week}",
      "VIEW_DOC/lectures/live/week{week}");
  add("VIEW_DOC/lectures/week{week}*", "read:lecture-{week}-wk",
      "VIEW_DOC/lectures/week{week}");
  add("VIEW_DOC/tasks", "read:tasks", "VIEW_DOC/tasks");
  add("VIEW_DOC/tasks/week{week}*", "read:tasks-{week}", "VIEW_DOC/tasks/week{week}");
  for (auto s : {"extra", "pre", "review", "supp"}) {
    add(fmt::format("VIEW_DOC/tasks/{}*", s), fmt::format("read:tasks-{}", s),
        fmt::format("VIEW_DOC/tasks/{}", s));
  }
  add("ANSWER/book/example/*:ok", "answer:materials-book-example",
      "ANSWER/book/example/ex1:ok");
  add("ANSWER/book/example/*:fail", "answer-wrong:materials-book-example",
      "ANSWER/book/example/ex1:fail");
  add("ANSWER/lectures/week{week}/example/*:ok", "answer:lecture-{week}-wk-example",
      "ANSWER/lectures/week{week}/example/ex1:ok");
  add("ANSWER/lectures/week{week}/example/*:fail",
      "answer-wrong:lecture-{week}-wk-example",
      "ANSWER/lectures/week{week}/example/ex1:fail");
  for (auto cat : {"self-assessment", "intro", "basic", "core", "bonus", "guru",
                   "supplementary"}) {
    add(fmt::format("ANSWER/tasks/week{{week}}/{}/*:ok", cat),
        fmt::format("answer:tasks-{{week}}-{}", cat),
        fmt::format("ANSWER/tasks/week{{week}}/{}/t1:ok", cat));
    add(fmt::format("ANSWER/tasks/week{{week}}/{}/*:fail", cat),
        fmt::format("answer-wrong:tasks-{{week}}-{}", cat),
        fmt::format("ANSWER/tasks/week{{week}}/{}/t1:fail", cat));
  }
  for (auto where : {"extra", "supp"}) {
    add(fmt::format("ANSWER/tasks/{}/supplementary/*:ok", where),
        fmt::format("answer:tasks-{}-supplementary", where),
        fmt::format("ANSWER/tasks/{}/supplementary/t1:ok", where));
    add(fmt::format("ANSWER/tasks/{}/supplementary/*:fail", where),
        fmt::format("answer-wrong:tasks-{}-supplementary", where),
        fmt::format("ANSWER/tasks/{}/supplementary/t1:fail", where));
  }
  for (auto cat : {"intro", "basic", "core", "bonus", "guru", "supplementary"}) {
    add(fmt::format("MODEL_ANSWER/tasks/week{{week}}/{}/*", cat),
        fmt::format("check-model-answer:tasks-{{week}}-{}", cat),
        fmt::format("MODEL_ANSWER/tasks/week{{week}}/{}/t1", cat));
  }
  add("LECTURE/week{week}/join", "join-lecture:lecture-{week}-wk",
      "LECTURE/week{week}/join");
  add("LECTURE/week{week}/leave", "leave-lecture:lecture-{week}-wk",
      "LECTURE/week{week}/leave");
  add("VIDEO/lectures/week{week}*", "watch-video:lecture-{week}-wk",
      "VIDEO/lectures/week{week}");
  add("VIDEO/review/week{week}*", "watch-video:tasks-review-{week}",
      "VIDEO/review/week{week}");
  add("TA_SESSION/start", "session-start:None", "TA_SESSION/start");
  add("TA_SESSION/end", "session-end:None", "TA_SESSION/end");
  add("WORKSHOP/start", "workshop-start:None", "WORKSHOP/start");
  add("WORKSHOP/end", "workshop-end:None", "WORKSHOP/end");
  return RuleTable(std::move(r));
}

std::optional<TraceEvent> recode_action(const RawLogLine& raw,
                                        const RuleTable& rules) {
  auto m = rules.match(raw.action);
  if (!m) return std::nullopt;
  return TraceEvent{raw.timestamp, raw.username, std::move(m->code), m->week};
}

TraceEvent relativize_week(const TraceEvent& event, const CourseCalendar& calendar) {
  if (!event.week_tag) return event;
  const auto current = calendar.week_of(event.timestamp);
  if (!current) {
    throw ValidationError(fmt::format(
        "event {};{};{} precedes the first course week",
        format_iso_timestamp(event.timestamp), event.student, event.code));
  }
  TraceEvent out = event;
  out.code = EventCodeRegistry::instantiate(
      event.code, relative_week(*event.week_tag, *current));
  out.week_tag.reset();
  return out;
}

bool is_sorted_by_student_time(const std::vector<TraceEvent>& events) {
  return std::is_sorted(events.begin(), events.end(),
                        [](const TraceEvent& a, const TraceEvent& b) {
                          return std::tie(a.student, a.timestamp) <
                                 std::tie(b.student, b.timestamp);
                        });
}

void sort_by_student_time(std::vector<TraceEvent>& events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const TraceEvent& a, const TraceEvent& b) {
                     return std::tie(a.student, a.timestamp) <
                            std::tie(b.student, b.timestamp);
                   });
}

std::vector<TraceEvent> merge_consecutive(const std::vector<TraceEvent>& events,
                                          const EventCodeRegistry& registry,
                                          Millis window) {
  if (!is_sorted_by_student_time(events)) {
    throw ValidationError("merge_consecutive: events not sorted by (student, timestamp)");
  }
  std::vector<TraceEvent> out;
  out.reserve(events.size());
  Timestamp run_last{};
  for (const auto& e : events) {
    if (!out.empty()) {
      const auto& head = out.back();
      if (head.student == e.student && head.code == e.code &&
          registry.is_debounced(e.code) && e.timestamp - run_last <= window) {
        run_last = e.timestamp;
        continue;
      }
    }
    out.push_back(e);
    run_last = e.timestamp;
  }
  return out;
}

IngestResult ingest_raw_log(std::string_view raw_log, const RuleTable& rules,
                            const EventCodeRegistry& registry,
                            const CourseCalendar& calendar, Millis merge_window) {
  IngestResult result;
  std::vector<TraceEvent> events;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < raw_log.size()) {
    auto nl = raw_log.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw_log.size();
    auto line = raw_log.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    ++result.stats.lines;
    RawLogLine raw;
    try {
      raw = parse_raw_line(line);
    } catch (const ParseError& e) {
      throw ParseError(fmt::format("raw log line {}: {}", line_no, e.what()),
                       e.offset());
    }
    auto event = recode_action(raw, rules);
    if (!event) {
      ++result.stats.irrelevant;
      continue;
    }
    TraceEvent relative = relativize_week(*event, calendar);
    if (!registry.contains(relative.code)) {
      ++result.stats.unregistered;
      continue;
    }
    events.push_back(std::move(relative));
  }
  sort_by_student_time(events);
  const std::size_t before = events.size();
  result.events = merge_consecutive(events, registry, merge_window);
  result.stats.merged = before - result.events.size();
  result.stats.events = result.events.size();
  return result;
}

}  // namespace srl::ingest
