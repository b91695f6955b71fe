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
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace srl {

// Base of every error the library raises. The CLI maps subclasses onto exit
// codes (2 missing input, 3 validation, 1 anything else).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A line-oriented parse failure; `offset` is the byte offset within the line.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : ValidationError(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// A required input artifact does not exist.
class MissingInputError : public Error {
 public:
  explicit MissingInputError(const std::string& path)
      : Error("missing input: " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

using Millis = std::chrono::milliseconds;
using Timestamp = std::chrono::sys_time<Millis>;

// "YYYY-MM-DD HH:MM:SS,mmm" as found in raw VLE logs. Throws ParseError.
Timestamp parse_raw_timestamp(std::string_view text);
std::string format_raw_timestamp(Timestamp ts);

// "YYYY-MM-DDTHH:MM:SS.mmmZ", the trace-log and CSV representation.
Timestamp parse_iso_timestamp(std::string_view text);
std::string format_iso_timestamp(Timestamp ts);

// "YYYY-MM-DD" -> midnight UTC of that civil date.
std::chrono::sys_days parse_date(std::string_view text);
std::string format_date(std::chrono::sys_days day);

// Seeded generator with library-defined (not distribution-defined) mappings so
// sequences are identical on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform on [0, n); n > 0.
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }
  // Uniform integer on [lo, hi].
  long long between(long long lo, long long hi) {
    return lo + static_cast<long long>(below(static_cast<std::size_t>(hi - lo + 1)));
  }
  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  // Index drawn proportionally to non-negative `weights` (sum > 0).
  template <typename Range>
  std::size_t categorical(const Range& weights) {
    double total = 0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    std::size_t i = 0;
    std::size_t last_positive = 0;
    for (double w : weights) {
      if (w > 0) last_positive = i;
      if (u < w) return i;
      u -= w;
      ++i;
    }
    return last_positive;
  }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

// Independent stream seed for (seed, stream) pairs.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace srl
