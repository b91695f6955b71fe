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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "srl/common.hpp"
#include "srl/ingest.hpp"

namespace srl::sessions {

inline constexpr Millis kDefaultGapCutoff = std::chrono::minutes{25};

// A gap-delimited run of one student's trace events.
struct Session {
  std::size_t id = 0;
  std::string student;
  int week_index = 0;  // course week of the first event
  std::vector<ingest::TraceEvent> events;
  Timestamp start{};
  Timestamp end{};
};

// Splits one student's time-ordered events wherever two consecutive events
// are more than `gap_cutoff` apart. Throws ValidationError for unsorted input,
// mixed students or a non-positive cutoff.
std::vector<Session> split_sessions(std::span<const ingest::TraceEvent> events,
                                    Millis gap_cutoff,
                                    const ingest::CourseCalendar& calendar);

// split_sessions over a (student, timestamp)-sorted multi-student stream.
// Session ids are positions in the returned vector.
std::vector<Session> split_all(std::span<const ingest::TraceEvent> events,
                               Millis gap_cutoff,
                               const ingest::CourseCalendar& calendar);

// Drops single-event sessions and renumbers ids 0..n-1.
std::vector<Session> filter_sessions(std::vector<Session> sessions);

// Relative event-code frequencies of one session, in registry order.
struct SessionFrequencyVector {
  std::size_t session_id = 0;
  std::vector<double> values;
};

SessionFrequencyVector frequency_vector(const Session& session,
                                        const ingest::EventCodeRegistry& registry);

// The part of a session that later stages need; round-trips through CSV.
struct SessionRecord {
  std::size_t id = 0;
  std::string student;
  int week_index = 0;
  Timestamp start{};
  Timestamp end{};
  std::size_t n_events = 0;
};

SessionRecord record_of(const Session& session);

// `session_id,student,week,start,end,n_events`
std::string sessions_csv(std::span<const SessionRecord> sessions);
std::vector<SessionRecord> parse_sessions_csv(std::string_view text);

// `session_id,<one column per registry code>`
std::string vectors_csv(std::span<const SessionFrequencyVector> vectors,
                        const ingest::EventCodeRegistry& registry);
std::vector<SessionFrequencyVector> parse_vectors_csv(
    std::string_view text, const ingest::EventCodeRegistry& registry);

}  // namespace srl::sessions
