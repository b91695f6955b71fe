#include <algorithm>
#include <random>
#include <set>

#include <fmt/core.h>

#include "doctest.h"
#include "srl/ingest.hpp"

using namespace srl;
using namespace srl::ingest;
using namespace std::chrono;

namespace {

const CourseCalendar& calendar() {
  static const CourseCalendar cal =
      CourseCalendar::weekly(sys_days{year{2023} / 9 / 4}, 11);
  return cal;
}

Timestamp at(int y, unsigned m, unsigned d, int h = 0, int mi = 0, int s = 0) {
  return Timestamp{sys_days{year{y} / m / d}} + hours{h} + minutes{mi} + seconds{s};
}

// Week number by counting whole days since the first start; deliberately not
// using CourseCalendar::week_of.
int reference_week(Timestamp ts) {
  const auto first = sys_days{year{2023} / 9 / 4};
  const auto day_index = floor<days>(ts) - first;
  return std::min<int>(11, static_cast<int>(day_index.count() / 7) + 1);
}

std::string reference_relative(int tag, int week) {
  if (tag == week) return "cur";
  return tag < week ? "prev" : "next";
}

}  // namespace

TEST_CASE("parse_raw_line extracts the fields of the documented format") {
  auto line = parse_raw_line("2023-09-01 12:00:00,000 INFO: u1 [127.0.0.1]: VIEW_DOC/book");
  CHECK(line.timestamp == at(2023, 9, 1, 12));
  CHECK(line.username == "u1");
  CHECK(line.client_address == "127.0.0.1");
  CHECK(line.action == "VIEW_DOC/book");
}

TEST_CASE("parse_raw_line rejects malformed input with byte offsets") {
  CHECK_THROWS_AS(parse_raw_line(""), ParseError);
  try {
    parse_raw_line("2023-09-01 12:00:00.000 INFO: u1 [127.0.0.1]: X");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 19);
  }
  CHECK_THROWS_AS(parse_raw_line("2023-02-30 12:00:00,000 INFO: u1 [ip]: X"), ParseError);
  CHECK_THROWS_AS(parse_raw_line("2023-09-01 12:00:00,000 INFO: u1 127.0.0.1: X"), ParseError);
  CHECK_THROWS_AS(parse_raw_line("2023-09-01 12:00:00,000 INFO: u1 [ip]: "), ParseError);
  CHECK_THROWS_AS(parse_raw_line("2023-09-01 12:00:00,000 WARN: u1 [ip]: X"), ParseError);
}

TEST_CASE("raw lines round-trip through format and parse") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<long long> ms(0, 400LL * 24 * 3600 * 1000);
  const char* actions[] = {"VIEW_DOC/book", "LOGIN", "ANSWER/tasks/week3/core/t1:ok",
                           "a b c: [x]"};
  for (int i = 0; i < 1000; ++i) {
    RawLogLine line{at(2023, 1, 1) + Millis{ms(rng)}, "user" + std::to_string(i % 37),
                    fmt::format("10.0.{}.{}", i % 256, (i * 7) % 256), actions[i % 4]};
    const auto text = format_raw_line(line);
    const auto parsed = parse_raw_line(text);
    CHECK(parsed == line);
    CHECK(format_raw_line(parsed) == text);
  }
}

TEST_CASE("default registry is the expanded event code table") {
  const auto reg = EventCodeRegistry::default_registry();
  CHECK(reg.size() == 78);
  CHECK(reg.size() <= 82);
  std::set<std::string> unique(reg.codes().begin(), reg.codes().end());
  CHECK(unique.size() == reg.size());
  for (const auto& c : reg.codes()) {
    if (reg.is_week_sensitive(c)) CHECK(EventCodeRegistry::week_template(c).has_value());
  }
  CHECK(reg.contains("read:lecuture-cur"));
  CHECK(reg.contains("answer:tasks-supp-supplementary"));
  CHECK(reg.is_week_sensitive("read:tasks-cur"));
  CHECK_FALSE(reg.is_week_sensitive("read:tasks-pre"));
  CHECK(reg.is_debounced("read:tasks-cur"));
  CHECK_FALSE(reg.is_debounced("answer:tasks-cur-basic"));
  CHECK(EventCodeRegistry::week_template("watch-video:tasks-review-next") ==
        "watch-video:tasks-review-{week}");
  CHECK(EventCodeRegistry::week_template("answer-wrong:tasks-extra-supplementary") ==
        std::nullopt);

  const auto again = EventCodeRegistry::from_json(reg.to_json());
  CHECK(again.codes() == reg.codes());
  CHECK_THROWS_AS(EventCodeRegistry({"a:x", "a:x"}, {}, {}), ValidationError);
  CHECK_THROWS_AS(EventCodeRegistry({"a:x"}, {"b:y"}, {}), ValidationError);
}

TEST_CASE("default rules are consistent with the registry") {
  const auto reg = EventCodeRegistry::default_registry();
  const auto rules = RuleTable::default_rules();
  CHECK_NOTHROW(rules.validate(reg));
  for (const auto& r : rules.rules()) {
    std::string example = r.example;
    if (auto p = example.find("{week}"); p != std::string::npos) example.replace(p, 6, "7");
    const auto m = rules.match(example);
    REQUIRE(m.has_value());
    CHECK(m->code == r.code);
  }
  // Every registry code has a generating action.
  for (const auto& c : reg.codes()) CHECK_NOTHROW(rules.example_action(c, 3));
  const auto again = RuleTable::from_json(rules.to_json());
  CHECK(again.rules().size() == rules.rules().size());
}

TEST_CASE("glob patterns capture the week number") {
  std::optional<int> week;
  CHECK(glob_match("VIEW_DOC/tasks/week{week}*", "VIEW_DOC/tasks/week12/a", &week));
  CHECK(week == 12);
  CHECK_FALSE(glob_match("VIEW_DOC/tasks/week{week}", "VIEW_DOC/tasks/weekX", &week));
  CHECK(glob_match("A*B*C", "AxxBC", nullptr));
  CHECK_FALSE(glob_match("A*B", "AxxBC", nullptr));
}

TEST_CASE("recode_action maps rule-table actions and drops the rest") {
  const auto rules = RuleTable::default_rules();
  RawLogLine raw{at(2023, 9, 12, 10), "s1", "ip", "VIEW_DOC/tasks/week2"};
  auto e = recode_action(raw, rules);
  REQUIRE(e.has_value());
  CHECK(e->code == "read:tasks-{week}");
  CHECK(e->week_tag == 2);
  raw.action = "VIEW_DOC/book/chapter-2";
  CHECK(recode_action(raw, rules)->code == "read:materials-book");
  raw.action = "SETTINGS/profile";
  CHECK_FALSE(recode_action(raw, rules).has_value());
}

TEST_CASE("planted irrelevant actions are exactly the ones filtered") {
  const auto rules = RuleTable::default_rules();
  const auto reg = EventCodeRegistry::default_registry();
  std::mt19937_64 rng(11);
  std::bernoulli_distribution irrelevant(0.3);
  const char* noise[] = {"LOGIN", "SETTINGS/profile", "VIEW_DOC/other-course/x", "LOGOUT"};
  std::size_t planted_relevant = 0;
  std::size_t survived = 0;
  for (int i = 0; i < 5000; ++i) {
    RawLogLine raw{at(2023, 9, 5) + minutes{i}, "s", "ip", ""};
    if (irrelevant(rng)) {
      raw.action = noise[i % 4];
    } else {
      raw.action = rules.example_action(reg.codes()[static_cast<std::size_t>(i) % reg.size()], 1);
      ++planted_relevant;
    }
    if (recode_action(raw, rules)) ++survived;
  }
  CHECK(survived == planted_relevant);
}

TEST_CASE("relativize_week follows the course calendar") {
  TraceEvent e{at(2023, 9, 12, 10), "s1", "read:tasks-{week}", 2};
  CHECK(relativize_week(e, calendar()).code == "read:tasks-cur");
  for (int w = 1; w <= 11; ++w) {
    TraceEvent self{calendar().week_start(w) + hours{30}, "s", "read:tasks-{week}", w};
    CHECK(relativize_week(self, calendar()).code == "read:tasks-cur");
  }
  // Boundary instant belongs to the week that starts there.
  TraceEvent boundary{calendar().week_start(3), "s", "read:tasks-{week}", 3};
  CHECK(relativize_week(boundary, calendar()).code == "read:tasks-cur");
  TraceEvent far_past{calendar().week_start(8), "s", "read:tasks-{week}", 2};
  CHECK(relativize_week(far_past, calendar()).code == "read:tasks-prev");
  TraceEvent early{at(2023, 9, 1), "s", "read:tasks-{week}", 1};
  CHECK_THROWS_AS(relativize_week(early, calendar()), ValidationError);
  TraceEvent plain{at(2023, 9, 5), "s", "read:materials-book", std::nullopt};
  CHECK(relativize_week(plain, calendar()) == plain);
}

TEST_CASE("relativize_week agrees with a day-counting reference") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<long long> offset(0, 77LL * 24 * 3600 * 1000 - 1);
  std::uniform_int_distribution<int> tag(0, 13);
  for (int i = 0; i < 2000; ++i) {
    const Timestamp ts = calendar().week_start(1) + Millis{offset(rng)};
    const int t = tag(rng);
    TraceEvent e{ts, "s", "watch-video:tasks-review-{week}", t};
    const auto out = relativize_week(e, calendar());
    CHECK(out.code == "watch-video:tasks-review-" + reference_relative(t, reference_week(ts)));
    CHECK_FALSE(out.week_tag.has_value());
  }
}

TEST_CASE("calendar honours the course UTC offset") {
  const auto cal = CourseCalendar::weekly(sys_days{year{2023} / 9 / 4}, 2, 180);
  CHECK(cal.week_start(1) == at(2023, 9, 3, 21));
  CHECK(cal.week_of(at(2023, 9, 3, 21)) == 1);
  CHECK_FALSE(cal.week_of(at(2023, 9, 3, 20, 59)).has_value());
  CHECK(cal.week_of(at(2024, 1, 1)) == 2);
  const auto parsed = CourseCalendar::from_csv(cal.to_csv(), 180);
  CHECK(parsed.week_starts() == cal.week_starts());
  CHECK_THROWS_AS(CourseCalendar({sys_days{year{2023} / 9 / 4}, sys_days{year{2023} / 9 / 4}}),
                  ValidationError);
}

TEST_CASE("merge_consecutive collapses debounced repeats") {
  const auto reg = EventCodeRegistry::default_registry();
  std::vector<TraceEvent> five;
  for (int i = 0; i < 5; ++i) five.push_back({at(2023, 9, 5) + seconds{10 * i}, "s", "read:tasks-cur", {}});
  auto merged = merge_consecutive(five, reg);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0] == five[0]);

  std::vector<TraceEvent> single{{at(2023, 9, 5), "s", "read:tasks-cur", {}}};
  CHECK(merge_consecutive(single, reg) == single);

  // Non-debounced codes and gaps over the window survive.
  std::vector<TraceEvent> mixed{{at(2023, 9, 5, 0, 0, 0), "s", "answer:tasks-cur-basic", {}},
                                {at(2023, 9, 5, 0, 0, 5), "s", "answer:tasks-cur-basic", {}},
                                {at(2023, 9, 5, 0, 0, 10), "s", "read:tasks-cur", {}},
                                {at(2023, 9, 5, 0, 1, 11), "s", "read:tasks-cur", {}},
                                {at(2023, 9, 5, 0, 1, 12), "t", "read:tasks-cur", {}}};
  CHECK(merge_consecutive(mixed, reg).size() == 5);

  std::vector<TraceEvent> unsorted{{at(2023, 9, 6), "s", "read:tasks", {}},
                                   {at(2023, 9, 5), "s", "read:tasks", {}}};
  CHECK_THROWS_AS(merge_consecutive(unsorted, reg), ValidationError);
}

TEST_CASE("merge_consecutive is idempotent and order preserving") {
  const auto reg = EventCodeRegistry::default_registry();
  std::mt19937_64 rng(99);
  const char* codes[] = {"read:tasks-cur", "read:materials-book", "answer:tasks-cur-core"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TraceEvent> stream;
    Timestamp t = at(2023, 9, 5);
    std::uniform_int_distribution<int> gap(1, 120);
    std::uniform_int_distribution<int> pick(0, 2);
    for (int i = 0; i < 60; ++i) {
      t += seconds{gap(rng)};
      stream.push_back({t, trial % 2 ? "a" : "b", codes[pick(rng)], {}});
    }
    const auto once = merge_consecutive(stream, reg);
    CHECK(merge_consecutive(once, reg) == once);
    // Survivors form a subsequence of the input with untouched fields.
    std::size_t j = 0;
    for (const auto& e : once) {
      while (j < stream.size() && !(stream[j] == e)) ++j;
      CHECK(j < stream.size());
      ++j;
    }
  }
}

TEST_CASE("trace log lines round-trip bit-exactly") {
  const std::string text =
      "2023-09-05T08:15:00.123Z;s1;read:tasks-cur\n"
      "2023-09-05T08:16:00.000Z;s1;answer:tasks-cur-basic\n";
  const auto events = parse_trace_log(text);
  REQUIRE(events.size() == 2);
  CHECK(events[0].timestamp == at(2023, 9, 5, 8, 15) + Millis{123});
  CHECK(format_trace_log(events) == text);
  CHECK_THROWS_AS(parse_trace_line("2023-09-05T08:15:00.123Z;s1"), ParseError);
  CHECK_THROWS_AS(parse_trace_line("2023-09-05 08:15:00.123Z;s1;x"), ParseError);
}

TEST_CASE("ingest_raw_log runs the full recoding pipeline") {
  const auto reg = EventCodeRegistry::default_registry();
  const auto rules = RuleTable::default_rules();
  const std::string raw =
      "2023-09-12 10:00:00,000 INFO: s1 [1.2.3.4]: VIEW_DOC/tasks/week2\n"
      "2023-09-12 10:00:10,000 INFO: s1 [1.2.3.4]: VIEW_DOC/tasks/week2\n"
      "2023-09-12 10:00:20,000 INFO: s1 [1.2.3.4]: LOGIN\n"
      "2023-09-12 10:00:30,000 INFO: s1 [1.2.3.4]: MODEL_ANSWER/tasks/week3/bonus/t1\n"
      "2023-09-12 10:00:40,000 INFO: s0 [1.2.3.4]: ANSWER/tasks/week1/core/t1:ok\n";
  const auto result = ingest_raw_log(raw, rules, reg, calendar());
  CHECK(result.stats.lines == 5);
  CHECK(result.stats.irrelevant == 1);
  CHECK(result.stats.unregistered == 1);
  CHECK(result.stats.merged == 1);
  REQUIRE(result.events.size() == 2);
  CHECK(result.events[0].student == "s0");
  CHECK(result.events[0].code == "answer:tasks-prev-core");
  CHECK(result.events[1].code == "read:tasks-cur");
  for (const auto& e : result.events) CHECK(reg.contains(e.code));

  CHECK_THROWS_AS(ingest_raw_log("garbage\n", rules, reg, calendar()), ParseError);
}
