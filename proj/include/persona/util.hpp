#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace persona {

// ---------------------------------------------------------------------------
// Hashing

/// 64-bit FNV-1a. Stable across platforms; used for mock outputs and ids.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Hash an ordered list of fields; field boundaries are significant.
std::uint64_t hash_fields(std::initializer_list<std::string_view> fields, std::uint64_t seed = 0) noexcept;

/// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view data);

/// First `n` hex chars of the SHA-256 over the joined fields (unit separator).
std::string short_digest(std::initializer_list<std::string_view> fields, std::size_t n = 16);

// ---------------------------------------------------------------------------
// Seeded randomness with platform-independent output. std distributions are
// implementation-defined, so every draw the pipeline persists goes through here.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept;
  /// Uniform in [0, 1).
  double uniform() noexcept;
  /// Uniform integer in [0, n). n must be > 0.
  std::size_t below(std::size_t n) noexcept;
  /// Standard normal (Box-Muller).
  double normal() noexcept;
  bool coin() noexcept { return (next() >> 63) != 0; }

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::uint64_t state_;
};

/// Derive an independent seed for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept;

// ---------------------------------------------------------------------------
// Text

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
/// Whitespace-delimited tokens (no case or punctuation handling).
std::vector<std::string> split_ws(std::string_view s);
std::size_t word_count(std::string_view s);
/// Lowercase, collapse runs of whitespace to one space, trim.
std::string normalize_text(std::string_view s);
bool icontains(std::string_view haystack, std::string_view needle);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
/// Replace every occurrence of `from` in `s` with `to`.
std::string replace_all(std::string s, std::string_view from, std::string_view to);

// ---------------------------------------------------------------------------
// Bounded parallel map. Results land at their input index so output order never
// depends on scheduling. The first exception (lowest index) is rethrown.

template <typename R, typename Fn>
std::vector<R> parallel_map(std::size_t n, std::size_t max_workers, Fn&& fn) {
  std::vector<R> out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(max_workers, n));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace persona
