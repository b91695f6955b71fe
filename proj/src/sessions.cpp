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

#include "srl/sessions.hpp"

#include <fmt/core.h>

#include "srl/io.hpp"

namespace srl::sessions {

using ingest::TraceEvent;

std::vector<Session> split_sessions(std::span<const TraceEvent> events,
                                    Millis gap_cutoff,
                                    const ingest::CourseCalendar& calendar) {
  if (gap_cutoff <= Millis::zero()) {
    throw ValidationError("gap cutoff must be positive");
  }
  std::vector<Session> out;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (i > 0) {
      if (e.student != events[i - 1].student) {
        throw ValidationError("split_sessions: events of more than one student");
      }
      if (e.timestamp < events[i - 1].timestamp) {
        throw ValidationError(fmt::format(
            "split_sessions: events of '{}' not sorted by timestamp", e.student));
      }
    }
    if (out.empty() || e.timestamp - out.back().end > gap_cutoff) {
      const auto week = calendar.week_of(e.timestamp);
      if (!week) {
        throw ValidationError(fmt::format("session of '{}' starts before the course",
                                          e.student));
      }
      Session s;
      s.id = out.size();
      s.student = e.student;
      s.week_index = *week;
      s.start = e.timestamp;
      out.push_back(std::move(s));
    }
    out.back().events.push_back(e);
    out.back().end = e.timestamp;
  }
  return out;
}

std::vector<Session> split_all(std::span<const TraceEvent> events, Millis gap_cutoff,
                               const ingest::CourseCalendar& calendar) {
  std::vector<Session> out;
  std::size_t begin = 0;
  while (begin < events.size()) {
    std::size_t end = begin + 1;
    while (end < events.size() && events[end].student == events[begin].student) ++end;
    if (end < events.size() && events[end].student < events[begin].student) {
      throw ValidationError("split_all: events not sorted by student");
    }
    for (auto& s : split_sessions(events.subspan(begin, end - begin), gap_cutoff,
                                  calendar)) {
      s.id = out.size();
      out.push_back(std::move(s));
    }
    begin = end;
  }
  return out;
}

std::vector<Session> filter_sessions(std::vector<Session> sessions) {
  std::vector<Session> out;
  for (auto& s : sessions) {
    if (s.events.size() >= 2) {
      s.id = out.size();
      out.push_back(std::move(s));
    }
  }
  return out;
}

SessionFrequencyVector frequency_vector(const Session& session,
                                        const ingest::EventCodeRegistry& registry) {
  if (session.events.empty()) throw ValidationError("frequency_vector: empty session");
  SessionFrequencyVector v;
  v.session_id = session.id;
  v.values.assign(registry.size(), 0.0);
  for (const auto& e : session.events) {
    const auto idx = registry.index_of(e.code);
    if (!idx) throw ValidationError(fmt::format("unknown event code '{}'", e.code));
    v.values[*idx] += 1.0;
  }
  const double n = static_cast<double>(session.events.size());
  for (auto& x : v.values) x /= n;
  return v;
}

SessionRecord record_of(const Session& session) {
  return {session.id, session.student, session.week_index, session.start,
          session.end, session.events.size()};
}

std::string sessions_csv(std::span<const SessionRecord> sessions) {
  io::CsvWriter w({"session_id", "student", "week", "start", "end", "n_events"});
  for (const auto& s : sessions) {
    w.add_row({std::to_string(s.id), s.student, std::to_string(s.week_index),
               format_iso_timestamp(s.start), format_iso_timestamp(s.end),
               std::to_string(s.n_events)});
  }
  return w.str();
}

std::vector<SessionRecord> parse_sessions_csv(std::string_view text) {
  const auto t = io::CsvTable::parse(text);
  t.require_columns({"session_id", "student", "week", "start", "end", "n_events"});
  std::vector<SessionRecord> out;
  for (std::size_t r = 0; r < t.size(); ++r) {
    SessionRecord s;
    s.id = static_cast<std::size_t>(io::parse_int(t.at(r, "session_id")));
    s.student = t.at(r, "student");
    s.week_index = static_cast<int>(io::parse_int(t.at(r, "week")));
    s.start = parse_iso_timestamp(t.at(r, "start"));
    s.end = parse_iso_timestamp(t.at(r, "end"));
    s.n_events = static_cast<std::size_t>(io::parse_int(t.at(r, "n_events")));
    out.push_back(std::move(s));
  }
  return out;
}

std::string vectors_csv(std::span<const SessionFrequencyVector> vectors,
                        const ingest::EventCodeRegistry& registry) {
  std::vector<std::string> header{"session_id"};
  header.insert(header.end(), registry.codes().begin(), registry.codes().end());
  io::CsvWriter w(header);
  std::vector<std::string> row;
  for (const auto& v : vectors) {
    row.clear();
    row.push_back(std::to_string(v.session_id));
    for (double x : v.values) row.push_back(io::format_double(x));
    w.add_row(row);
  }
  return w.str();
}

std::vector<SessionFrequencyVector> parse_vectors_csv(
    std::string_view text, const ingest::EventCodeRegistry& registry) {
  const auto t = io::CsvTable::parse(text);
  if (t.header().size() != registry.size() + 1 || t.header()[0] != "session_id") {
    throw ValidationError("vector CSV columns do not match the registry");
  }
  for (std::size_t c = 0; c < registry.size(); ++c) {
    if (t.header()[c + 1] != registry.codes()[c]) {
      throw ValidationError(fmt::format("vector CSV column {} is '{}', expected '{}'",
                                        c + 1, t.header()[c + 1], registry.codes()[c]));
    }
  }
  std::vector<SessionFrequencyVector> out;
  out.reserve(t.size());
  for (const auto& row : t.rows()) {
    SessionFrequencyVector v;
    v.session_id = static_cast<std::size_t>(io::parse_int(row[0]));
    v.values.reserve(registry.size());
    for (std::size_t c = 1; c < row.size(); ++c) v.values.push_back(io::parse_double(row[c]));
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace srl::sessions
