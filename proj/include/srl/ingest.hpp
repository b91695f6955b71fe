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

#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "srl/common.hpp"
#include "srl/io.hpp"

namespace srl::ingest {

// One record of the VLE's raw log:
//   YYYY-MM-DD HH:MM:SS,mmm INFO: <user> [<ip>]: <action>
struct RawLogLine {
  Timestamp timestamp;
  std::string username;
  std::string client_address;  // parsed for validation, never propagated
  std::string action;

  bool operator==(const RawLogLine&) const = default;
};

// Throws ParseError (with byte offset) on malformed input.
RawLogLine parse_raw_line(std::string_view line);
std::string format_raw_line(const RawLogLine& line);

enum class RelativeWeek { kPrev, kCur, kNext };

std::string_view to_string(RelativeWeek week);

// Course-relative position of a week tag seen during `current_week`.
// Tags further away than one week clamp to prev/next.
RelativeWeek relative_week(int tag_week, int current_week);

// The set of trace event codes. Order is significant: it fixes the column
// order of session frequency vectors.
class EventCodeRegistry {
 public:
  EventCodeRegistry(std::vector<std::string> codes,
                    std::vector<std::string> week_sensitive,
                    std::vector<std::string> merge_debounced);

  // Every code of the condensed event code table, expanded.
  static EventCodeRegistry default_registry();
  static EventCodeRegistry from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  std::size_t size() const { return codes_.size(); }
  const std::vector<std::string>& codes() const { return codes_; }
  std::optional<std::size_t> index_of(std::string_view code) const;
  bool contains(std::string_view code) const {
    return index_of(code).has_value();
  }
  bool is_week_sensitive(std::string_view code) const;
  bool is_debounced(std::string_view code) const;

  // For a code with a prev/cur/next segment after the colon, the same code
  // with that segment replaced by "{week}"; otherwise nullopt.
  static std::optional<std::string> week_template(std::string_view code);
  static std::string instantiate(std::string_view tmpl, RelativeWeek week);

 private:
  std::vector<std::string> codes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_set<std::string> week_sensitive_;
  std::unordered_set<std::string> debounced_;
};

// Eleven (by default) week start dates. Dates are civil dates in the course
// timezone, given as a fixed offset from UTC.
class CourseCalendar {
 public:
  CourseCalendar(std::vector<std::chrono::sys_days> week_starts,
                 int utc_offset_minutes = 0);

  // CSV `week_index,start_date`.
  static CourseCalendar from_csv(std::string_view text,
                                 int utc_offset_minutes = 0);
  std::string to_csv() const;
  // `count` consecutive weeks starting on `first`.
  static CourseCalendar weekly(std::chrono::sys_days first, int count,
                               int utc_offset_minutes = 0);

  int week_count() const { return static_cast<int>(week_starts_.size()); }
  const std::vector<std::chrono::sys_days>& week_starts() const {
    return week_starts_;
  }
  int utc_offset_minutes() const { return utc_offset_minutes_; }

  // UTC instant at which week `week` (1-based) begins.
  Timestamp week_start(int week) const;
  // Instant at which week `week` ends: the next start, or start + 7 days for
  // the final week.
  Timestamp week_end(int week) const;
  // 1-based week containing `ts` (half-open intervals; the final week is
  // open-ended). nullopt before the first week.
  std::optional<int> week_of(Timestamp ts) const;

 private:
  std::vector<std::chrono::sys_days> week_starts_;
  int utc_offset_minutes_;
};

// A recoded learner action. Before relativization a week-sensitive event
// carries a code template ("read:tasks-{week}") plus the absolute week tag.
struct TraceEvent {
  Timestamp timestamp;
  std::string student;
  std::string code;
  std::optional<int> week_tag;

  bool operator==(const TraceEvent&) const = default;
};

// `TIMESTAMP;STUDENT;EVENT_CODE`
std::string format_trace_line(const TraceEvent& event);
TraceEvent parse_trace_line(std::string_view line);
std::string format_trace_log(const std::vector<TraceEvent>& events);
// Blank trailing line tolerated; errors carry the 1-based line number.
std::vector<TraceEvent> parse_trace_log(std::string_view text);

// One action -> code rule. `pattern` is matched against the whole action:
// `*` matches any run of characters, `{week}` a run of digits (the absolute
// course week). `code` contains "{week}" iff the pattern does. `example` is a
// concrete action for the generator, with "{week}" left for substitution.
struct ActionRule {
  std::string pattern;
  std::string code;
  std::string example;
};

struct RuleMatch {
  std::string code;  // concrete code or template
  std::optional<int> week;
};

class RuleTable {
 public:
  explicit RuleTable(std::vector<ActionRule> rules);

  static RuleTable default_rules();
  static RuleTable from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  // First matching rule wins.
  std::optional<RuleMatch> match(std::string_view action) const;
  const std::vector<ActionRule>& rules() const { return rules_; }

  // Every rule's code must be a registry code or a template with at least
  // one registry instantiation. Throws ValidationError otherwise.
  void validate(const EventCodeRegistry& registry) const;

  // Concrete action string for an event code as seen in `absolute_week`,
  // used by the synthetic generator. Throws if no rule produces `code`.
  std::string example_action(std::string_view code, int absolute_week) const;

 private:
  std::vector<ActionRule> rules_;
  std::unordered_map<std::string, std::size_t> literal_;  // wildcard-free
  std::vector<std::size_t> wildcard_;
};

// Glob match used by RuleTable; exposed for tests.
bool glob_match(std::string_view pattern, std::string_view text,
                std::optional<int>* week);

// nullopt for course-irrelevant actions.
std::optional<TraceEvent> recode_action(const RawLogLine& raw,
                                        const RuleTable& rules);

// Replaces the absolute week tag by prev|cur|next relative to the calendar
// week of the event. Throws ValidationError for pre-course events.
TraceEvent relativize_week(const TraceEvent& event,
                           const CourseCalendar& calendar);

// Collapses runs of identical debounced codes of one student whose successive
// gaps are <= window to the run's first event. Input must be sorted by
// (student, timestamp); throws ValidationError otherwise.
std::vector<TraceEvent> merge_consecutive(const std::vector<TraceEvent>& events,
                                          const EventCodeRegistry& registry,
                                          Millis window = std::chrono::seconds{60});

bool is_sorted_by_student_time(const std::vector<TraceEvent>& events);
void sort_by_student_time(std::vector<TraceEvent>& events);

struct IngestStats {
  std::size_t lines = 0;
  std::size_t irrelevant = 0;      // no rule matched
  std::size_t unregistered = 0;    // relativized code not in registry
  std::size_t merged = 0;          // collapsed by merge_consecutive
  std::size_t events = 0;          // emitted
};

struct IngestResult {
  std::vector<TraceEvent> events;
  IngestStats stats;
};

// Full raw log -> trace log pipeline. Parse errors are rethrown with the
// 1-based line number prepended.
IngestResult ingest_raw_log(std::string_view raw_log, const RuleTable& rules,
                            const EventCodeRegistry& registry,
                            const CourseCalendar& calendar,
                            Millis merge_window = std::chrono::seconds{60});

}  // namespace srl::ingest
