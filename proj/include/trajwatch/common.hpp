#pragma once

// Shared primitives: 2-D vectors, the library-wide error type, number
// formatting/parsing that round-trips exactly, deterministic seed mixing,
// and a small contiguous-chunk parallel loop.

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace trajwatch {

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

// 2-D image-plane vector (pixel units unless noted otherwise).
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
  friend Vec2 operator*(Vec2 v, double s) { return {s * v.x, s * v.y}; }
  friend bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }
  friend bool operator!=(Vec2 a, Vec2 b) { return !(a == b); }

  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::sqrt(x * x + y * y); }
  Vec2 perp() const { return {-y, x}; }  // rotated +90 degrees
};

inline double euclid(Vec2 a, Vec2 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class Errc {
  invalid_argument,
  invalid_config,
  io_error,
  parse_error,
  duplicate_frame,
  out_of_order_frames,
  conflicting_label,
  inconsistent_horizon,
  insufficient_history,
  window_exceeds_horizon,
  missing_actual_frames,
  degenerate_chord,
  single_class_corpus,
  non_positive_buffer,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::invalid_config: return "invalid_config";
    case Errc::io_error: return "io_error";
    case Errc::parse_error: return "parse_error";
    case Errc::duplicate_frame: return "duplicate_frame";
    case Errc::out_of_order_frames: return "out_of_order_frames";
    case Errc::conflicting_label: return "conflicting_label";
    case Errc::inconsistent_horizon: return "inconsistent_horizon";
    case Errc::insufficient_history: return "insufficient_history";
    case Errc::window_exceeds_horizon: return "window_exceeds_horizon";
    case Errc::missing_actual_frames: return "missing_actual_frames";
    case Errc::degenerate_chord: return "degenerate_chord";
    case Errc::single_class_corpus: return "single_class_corpus";
    case Errc::non_positive_buffer: return "non_positive_buffer";
  }
  return "unknown";
}

// All library failures surface as this exception; the code distinguishes
// programmatic handling, the message carries context for humans.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

// ---------------------------------------------------------------------------
// Number formatting / parsing (exact round-trip)
// ---------------------------------------------------------------------------

// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r' || s.front() == '\n')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r' || s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

// Splits on `sep`, keeping empty fields ("a,,b" -> {"a", "", "b"}).
inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline double parse_double(std::string_view raw, const std::string& context) {
  const std::string_view s = trim(raw);
  double value = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    fail(Errc::parse_error, context + ": not a number: '" + std::string(raw) + "'");
  }
  return value;
}

inline std::int64_t parse_int(std::string_view raw, const std::string& context) {
  const std::string_view s = trim(raw);
  std::int64_t value = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    fail(Errc::parse_error, context + ": not an integer: '" + std::string(raw) + "'");
  }
  return value;
}

// ---------------------------------------------------------------------------
// Deterministic seeding
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent sub-seed for stream index `stream`. Used to give
// every generated track its own RNG so generation order (and thread count)
// cannot perturb the corpus.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  return splitmix64(s);
}

// ---------------------------------------------------------------------------
// Parallel loop
// ---------------------------------------------------------------------------

// Runs fn(i) for every i in [0, n), split into contiguous chunks over up to
// `threads` worker threads. threads <= 1 degenerates to a plain serial loop.
// fn must not touch shared mutable state across indices; the first exception
// thrown by any worker is rethrown on the calling thread.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  std::atomic<int> error_guard{0};
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        if (error_guard.fetch_add(1) == 0) first_error = std::current_exception();
        failed.store(true);
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failed.load() && first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// key = value text blocks (config and scene files)
// ---------------------------------------------------------------------------

struct KvEntry {
  std::string key;
  std::string value;
  int line = 0;  // 1-based, for error messages
};

// Parses "key = value" lines; '#' starts a comment, blank lines are skipped.
inline std::vector<KvEntry> parse_key_values(std::string_view text,
                                             const std::string& source) {
  std::vector<KvEntry> out;
  int line_no = 0;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(Errc::parse_error,
           source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    out.push_back({std::string(trim(line.substr(0, eq))),
                   std::string(trim(line.substr(eq + 1))), line_no});
  }
  return out;
}

}  // namespace trajwatch
