// Copyright 2026 The dgmil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dgmil {

inline constexpr const char* kVersion = "0.1.0";

/// Row-major so that one instance is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class ErrorKind {
  kFormat,        // wrong magic, version or header
  kCorruption,    // truncated or inconsistent payload
  kValidation,    // data violates a dataset invariant
  kPrecondition,  // caller passed arguments outside the contract
  kIo,
  kDivergence,    // training produced a non-finite loss
  kRuntime,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kCorruption: return "corruption error";
    case ErrorKind::kValidation: return "validation error";
    case ErrorKind::kPrecondition: return "precondition violation";
    case ErrorKind::kIo: return "I/O error";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kRuntime: return "runtime error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Message without the kind prefix, for re-wrapping with more context.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorKind::kPrecondition, message);
}

/// Execution mode. Reproducible runs every reduction sequentially in a fixed
/// order; fast mode may split per-instance work across threads.
enum class ExecMode { kReproducible, kFast };

inline const char* to_string(ExecMode mode) {
  return mode == ExecMode::kFast ? "fast" : "reproducible";
}

inline ExecMode parse_exec_mode(const std::string& text) {
  if (text == "reproducible") return ExecMode::kReproducible;
  if (text == "fast") return ExecMode::kFast;
  fail(ErrorKind::kPrecondition, "unknown mode '" + text + "' (expected reproducible|fast)");
}

/// Runs body(begin, end) over [0, n). In fast mode the range is split into
/// contiguous chunks, one per hardware thread. Bodies must only write to
/// per-index outputs.
template <typename Body>
void parallel_for(std::size_t n, ExecMode mode, Body&& body) {
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  if (mode == ExecMode::kReproducible || hw == 1 || n < 2048) {
    body(std::size_t{0}, n);
    return;
  }
  const std::size_t chunks = std::min<std::size_t>(hw, n);
  const std::size_t step = (n + chunks - 1) / chunks;
  std::vector<std::jthread> workers;
  workers.reserve(chunks);
  for (std::size_t begin = 0; begin < n; begin += step) {
    const std::size_t end = std::min(n, begin + step);
    workers.emplace_back([&body, begin, end] { body(begin, end); });
  }
}

/// Deterministic RNG for a named sub-stream of a run seed, so that adding
/// draws to one stream never shifts another.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::initializer_list<std::uint32_t> stream) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed & 0xffffffffu),
                                   static_cast<std::uint32_t>(seed >> 32)};
  words.insert(words.end(), stream.begin(), stream.end());
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

/// Derives a child seed from a parent seed and a stream path.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint32_t> stream) {
  auto rng = make_rng(seed, stream);
  return rng();
}

/// Linear-interpolation percentile (p in [0, 100]) of an unsorted sample.
inline double percentile(std::span<const double> values, double p) {
  require(!values.empty(), "percentile of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = (p / 100.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Order-independent mean: members are summed in sorted order, so any
/// permutation of the input gives a bitwise-identical result.
inline double order_independent_mean(std::vector<double> values) {
  require(!values.empty(), "mean of an empty sample");
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace dgmil
