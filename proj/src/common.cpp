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

#include "srl/common.hpp"

#include <charconv>
#include <cmath>

#include <fmt/core.h>

namespace srl {
namespace {

using namespace std::chrono;

// Reads exactly `width` ASCII digits at `pos`.
int read_digits(std::string_view text, std::size_t pos, std::size_t width) {
  if (pos + width > text.size()) {
    throw ParseError("timestamp truncated", text.size());
  }
  int value = 0;
  for (std::size_t i = pos; i < pos + width; ++i) {
    const char c = text[i];
    if (c < '0' || c > '9') throw ParseError("expected digit in timestamp", i);
    value = value * 10 + (c - '0');
  }
  return value;
}

void expect_char(std::string_view text, std::size_t pos, char c) {
  if (pos >= text.size()) throw ParseError("timestamp truncated", text.size());
  if (text[pos] != c) {
    throw ParseError(fmt::format("expected '{}' in timestamp", c), pos);
  }
}

sys_days checked_date(int y, int m, int d, std::size_t offset) {
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw ParseError("invalid calendar date", offset);
  return sys_days{ymd};
}

// Parses "YYYY-MM-DD?HH:MM:SS?mmm" where the two '?' separators are given.
Timestamp parse_with(std::string_view text, char date_time_sep, char frac_sep) {
  const int y = read_digits(text, 0, 4);
  expect_char(text, 4, '-');
  const int mo = read_digits(text, 5, 2);
  expect_char(text, 7, '-');
  const int d = read_digits(text, 8, 2);
  expect_char(text, 10, date_time_sep);
  const int h = read_digits(text, 11, 2);
  expect_char(text, 13, ':');
  const int mi = read_digits(text, 14, 2);
  expect_char(text, 16, ':');
  const int s = read_digits(text, 17, 2);
  expect_char(text, 19, frac_sep);
  const int ms = read_digits(text, 20, 3);
  if (h > 23) throw ParseError("hour out of range", 11);
  if (mi > 59) throw ParseError("minute out of range", 14);
  if (s > 59) throw ParseError("second out of range", 17);
  return Timestamp{checked_date(y, mo, d, 0)} + hours{h} + minutes{mi} +
         seconds{s} + Millis{ms};
}

std::string format_with(Timestamp ts, char date_time_sep, char frac_sep) {
  const sys_days day = floor<days>(ts);
  const year_month_day ymd{day};
  const hh_mm_ss<Millis> tod{ts - day};
  return fmt::format("{:04d}-{:02d}-{:02d}{}{:02d}:{:02d}:{:02d}{}{:03d}",
                     static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()),
                     static_cast<unsigned>(ymd.day()), date_time_sep,
                     tod.hours().count(), tod.minutes().count(),
                     tod.seconds().count(), frac_sep,
                     tod.subseconds().count());
}

}  // namespace

Timestamp parse_raw_timestamp(std::string_view text) {
  if (text.size() != 23) throw ParseError("raw timestamp must be 23 bytes", 0);
  return parse_with(text, ' ', ',');
}

std::string format_raw_timestamp(Timestamp ts) {
  return format_with(ts, ' ', ',');
}

Timestamp parse_iso_timestamp(std::string_view text) {
  if (text.size() != 24) {
    throw ParseError("ISO timestamp must be 24 bytes", 0);
  }
  expect_char(text, 23, 'Z');
  return parse_with(text.substr(0, 23), 'T', '.');
}

std::string format_iso_timestamp(Timestamp ts) {
  return format_with(ts, 'T', '.') + "Z";
}

sys_days parse_date(std::string_view text) {
  if (text.size() != 10) throw ParseError("date must be YYYY-MM-DD", 0);
  const int y = read_digits(text, 0, 4);
  expect_char(text, 4, '-');
  const int m = read_digits(text, 5, 2);
  expect_char(text, 7, '-');
  const int d = read_digits(text, 8, 2);
  return checked_date(y, m, d, 0);
}

std::string format_date(sys_days day) {
  const year_month_day ymd{day};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()),
                     static_cast<unsigned>(ymd.day()));
}

double Rng::normal() {
  // Box-Muller; u1 in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL));
}

}  // namespace srl
