#pragma once

// Synthetic corpus generation: Poisson traffic on straight lanes with
// Gaussian detection noise, plus rule-based anomaly injection that rewrites
// a sampled subset of tracks and labels the result.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "trajwatch/common.hpp"
#include "trajwatch/config.hpp"
#include "trajwatch/types.hpp"

namespace trajwatch {

// A traffic scene: `lanes` parallel lanes spaced lane_spacing_px apart,
// vehicles entering as a Poisson process and driving straight along
// flow_axis at a per-vehicle speed drawn from N(mean, jitter^2).
struct SceneSpec {
  int lanes = 3;
  double lane_spacing_px = 60.0;
  Vec2 flow_axis = {0.0, 1.0};
  double speed_mean_px_per_s = 80.0;
  double speed_jitter_px_per_s = 8.0;
  double duration_s = 60.0;
  double vehicles_per_s = 1.0;
  double noise_px = 0.0;
  double sample_rate_hz = 5.0;
  std::uint64_t seed = 1;

  friend bool operator==(const SceneSpec& a, const SceneSpec& b) {
    return a.lanes == b.lanes && a.lane_spacing_px == b.lane_spacing_px &&
           a.flow_axis == b.flow_axis &&
           a.speed_mean_px_per_s == b.speed_mean_px_per_s &&
           a.speed_jitter_px_per_s == b.speed_jitter_px_per_s &&
           a.duration_s == b.duration_s &&
           a.vehicles_per_s == b.vehicles_per_s && a.noise_px == b.noise_px &&
           a.sample_rate_hz == b.sample_rate_hz && a.seed == b.seed;
  }
};

enum class AnomalyKind { lane_departure, drift_to_camera, abrupt_halt };

inline const char* to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::lane_departure: return "lane_departure";
    case AnomalyKind::drift_to_camera: return "drift_to_camera";
    case AnomalyKind::abrupt_halt: return "abrupt_halt";
  }
  return "unknown";
}

inline AnomalyKind parse_anomaly_kind(std::string_view s) {
  if (s == "lane_departure") return AnomalyKind::lane_departure;
  if (s == "drift_to_camera") return AnomalyKind::drift_to_camera;
  if (s == "abrupt_halt") return AnomalyKind::abrupt_halt;
  fail(Errc::parse_error, "unknown anomaly kind '" + std::string(s) + "'");
}

// Severity units depend on the kind: lateral px/s for lane_departure, total
// radians for drift_to_camera, seconds-to-standstill for abrupt_halt.
inline double default_severity(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::lane_departure: return 30.0;
    case AnomalyKind::drift_to_camera: return 0.3;
    case AnomalyKind::abrupt_halt: return 1.0;
  }
  return 0.0;
}

struct AnomalySpec {
  AnomalyKind kind = AnomalyKind::lane_departure;
  double onset_s = 4.0;  // relative to each perturbed track's first sample
  std::optional<double> severity;  // defaulted per kind when absent
  double fraction = 0.1;  // share of the corpus to perturb

  double severity_or_default() const {
    return severity ? *severity : default_severity(kind);
  }

  friend bool operator==(const AnomalySpec& a, const AnomalySpec& b) {
    return a.kind == b.kind && a.onset_s == b.onset_s &&
           a.severity == b.severity && a.fraction == b.fraction;
  }
};

namespace detail {

inline void validate_scene(const SceneSpec& scene) {
  if (scene.lanes < 1) fail(Errc::invalid_argument, "lanes must be >= 1");
  if (!(scene.lane_spacing_px > 0.0)) {
    fail(Errc::invalid_argument, "lane_spacing_px must be positive");
  }
  if (std::abs(scene.flow_axis.norm() - 1.0) > 1e-9) {
    fail(Errc::invalid_argument, "flow_axis must have unit norm");
  }
  if (!(scene.speed_mean_px_per_s > 0.0)) {
    fail(Errc::invalid_argument, "speed_mean_px_per_s must be positive");
  }
  if (scene.speed_jitter_px_per_s < 0.0) {
    fail(Errc::invalid_argument, "speed_jitter_px_per_s must be >= 0");
  }
  if (!(scene.duration_s > 0.0)) {
    fail(Errc::invalid_argument, "duration_s must be positive");
  }
  if (scene.vehicles_per_s < 0.0) {
    fail(Errc::invalid_argument, "vehicles_per_s must be >= 0");
  }
  if (scene.noise_px < 0.0) {
    fail(Errc::invalid_argument, "noise_px must be >= 0");
  }
  if (!(scene.sample_rate_hz > 0.0)) {
    fail(Errc::invalid_argument, "sample_rate_hz must be positive");
  }
}

struct VehicleProfile {
  int class_id;
  double width;
  double height;
};

// Rough COCO-flavored mix: mostly cars, some trucks, a few buses.
inline VehicleProfile draw_vehicle(std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < 0.85) return {2, 42.0, 34.0};
  if (u < 0.95) return {7, 70.0, 52.0};
  return {5, 92.0, 68.0};
}

}  // namespace detail

// Generates normal traffic. Deterministic for a given spec: the master RNG
// draws only the arrival process, and each track gets its own RNG derived
// from (seed, track index), so per-track content is independent of order.
// All labels are 0. With noise_px = 0 every track is exactly collinear.
inline std::vector<Trajectory> gen_normal(const SceneSpec& scene) {
  detail::validate_scene(scene);
  const auto total_frames =
      std::llround(scene.duration_s * scene.sample_rate_hz);
  if (total_frames < 1) {
    fail(Errc::invalid_argument, "scene too short for a single frame");
  }
  std::mt19937_64 master(mix_seed(scene.seed, 0));
  const std::int64_t count = std::poisson_distribution<std::int64_t>(
      scene.vehicles_per_s * scene.duration_s)(master);
  std::vector<double> arrivals(static_cast<std::size_t>(count));
  std::uniform_real_distribution<double> arrival_dist(0.0, scene.duration_s);
  for (auto& t : arrivals) t = arrival_dist(master);
  std::sort(arrivals.begin(), arrivals.end());

  // Clockwise perpendicular, so the default downward flow puts lane centers
  // at positive x like an image would.
  const Vec2 lateral = {scene.flow_axis.y, -scene.flow_axis.x};
  std::vector<Trajectory> out;
  out.reserve(arrivals.size());
  for (std::size_t k = 0; k < arrivals.size(); ++k) {
    std::mt19937_64 rng(mix_seed(scene.seed, k + 1));
    const int lane =
        std::uniform_int_distribution<int>(0, scene.lanes - 1)(rng);
    double speed = std::normal_distribution<double>(
        scene.speed_mean_px_per_s, scene.speed_jitter_px_per_s)(rng);
    // Keep every vehicle moving forward even in extreme draws.
    speed = std::max(speed, 0.1 * scene.speed_mean_px_per_s);
    const auto profile = detail::draw_vehicle(rng);
    std::normal_distribution<double> noise(0.0, scene.noise_px);

    const auto first_frame = std::min<std::int64_t>(
        total_frames - 1, std::llround(arrivals[k] * scene.sample_rate_hz));
    const double t0 =
        static_cast<double>(first_frame) / scene.sample_rate_hz;
    const double lane_center = (lane + 0.5) * scene.lane_spacing_px;

    Trajectory traj;
    traj.track_id = static_cast<std::int64_t>(k) + 1;
    traj.sample_rate_hz = scene.sample_rate_hz;
    traj.label = 0;
    traj.points.reserve(static_cast<std::size_t>(total_frames - first_frame));
    for (std::int64_t f = first_frame; f < total_frames; ++f) {
      const double t = static_cast<double>(f) / scene.sample_rate_hz;
      Vec2 pos = lane_center * lateral + (speed * (t - t0)) * scene.flow_axis;
      if (scene.noise_px > 0.0) {
        pos.x += noise(rng);
        pos.y += noise(rng);
      }
      traj.points.push_back(
          {f, pos.x, pos.y, profile.width, profile.height, profile.class_id});
    }
    out.push_back(std::move(traj));
  }
  return out;
}

namespace detail {

inline double elapsed_sec(const Trajectory& traj, std::size_t idx) {
  return static_cast<double>(traj.points[idx].frame - traj.points[0].frame) /
         traj.sample_rate_hz;
}

inline void set_pos(TrackPoint& p, Vec2 pos) {
  p.cx = pos.x;
  p.cy = pos.y;
}

// Unit direction of net travel; falls back to +x for a stationary track.
inline Vec2 travel_direction(const Trajectory& traj) {
  const Vec2 net = traj.points.back().pos() - traj.points.front().pos();
  const double n = net.norm();
  if (n < 1e-9) return {1.0, 0.0};
  return net * (1.0 / n);
}

inline Vec2 rotate(Vec2 v, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {v.x * c - v.y * s, v.x * s + v.y * c};
}

// Adds a lateral offset growing at `rate` px/s from onset onward.
inline void apply_lane_departure(Trajectory& traj, double onset_s,
                                 double rate) {
  const Vec2 lateral = travel_direction(traj).perp();
  for (std::size_t i = 0; i < traj.points.size(); ++i) {
    const double over = elapsed_sec(traj, i) - onset_s;
    if (over <= 0.0) continue;
    set_pos(traj.points[i], traj.points[i].pos() + (rate * over) * lateral);
  }
}

inline std::vector<Vec2> original_positions(const Trajectory& traj) {
  std::vector<Vec2> out(traj.points.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = traj.points[i].pos();
  return out;
}

// Rotates each post-onset step by an angle ramping linearly from 0 at onset
// to `total_theta` at the final step, bending the path progressively.
inline void apply_drift(Trajectory& traj, double onset_s, double total_theta) {
  const std::size_t n = traj.points.size();
  const double t_end = elapsed_sec(traj, n - 1);
  const double denom = t_end - onset_s;
  if (!(denom > 0.0)) return;
  const auto source = original_positions(traj);
  Vec2 pos{};
  bool rewriting = false;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!rewriting) {
      if (elapsed_sec(traj, i) < onset_s) continue;
      rewriting = true;
      pos = source[i];
    }
    const Vec2 step = source[i + 1] - source[i];
    const double ramp =
        std::clamp((elapsed_sec(traj, i + 1) - onset_s) / denom, 0.0, 1.0);
    pos = pos + rotate(step, total_theta * ramp);
    set_pos(traj.points[i + 1], pos);
  }
}

// Scales each post-onset step by a factor decaying linearly from 1 at onset
// to 0 after `decay_s` seconds; the vehicle then holds position exactly.
inline void apply_halt(Trajectory& traj, double onset_s, double decay_s) {
  const std::size_t n = traj.points.size();
  const auto source = original_positions(traj);
  Vec2 pos{};
  bool rewriting = false;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!rewriting) {
      if (elapsed_sec(traj, i) < onset_s) continue;
      rewriting = true;
      pos = source[i];
    }
    const Vec2 step = source[i + 1] - source[i];
    const double over = elapsed_sec(traj, i) - onset_s;
    const double scale =
        decay_s > 0.0 ? std::clamp(1.0 - over / decay_s, 0.0, 1.0) : 0.0;
    pos = pos + scale * step;
    set_pos(traj.points[i + 1], pos);
  }
}

}  // namespace detail

// Perturbs round(fraction * corpus size) tracks, drawn by seeded shuffle
// from those long enough to contain the onset, rewrites their motion from
// onset_s onward per the anomaly kind, and labels them 1. Every other track
// is returned byte-identical with label 0. A perturbed track must differ
// from its source in at least one position.
inline std::vector<Trajectory> inject(std::vector<Trajectory> corpus,
                                      const AnomalySpec& spec,
                                      std::uint64_t seed) {
  if (corpus.empty()) {
    fail(Errc::invalid_argument, "cannot inject into an empty corpus");
  }
  if (spec.fraction < 0.0 || spec.fraction > 1.0) {
    fail(Errc::invalid_argument, "fraction must lie in [0, 1]");
  }
  if (spec.onset_s < 0.0) {
    fail(Errc::invalid_argument, "onset_s must be >= 0");
  }
  const double severity = spec.severity_or_default();
  if (!(severity > 0.0)) {
    fail(Errc::invalid_argument, "severity must be positive");
  }
  for (auto& traj : corpus) {
    if (!traj.label) traj.label = 0;
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].duration_sec() > spec.onset_s) candidates.push_back(i);
  }
  auto target = static_cast<std::size_t>(
      std::llround(spec.fraction * static_cast<double>(corpus.size())));
  target = std::min(target, candidates.size());
  std::mt19937_64 rng(mix_seed(seed, 0xA5));
  std::shuffle(candidates.begin(), candidates.end(), rng);
  // Apply-verify-commit: a candidate that the rewrite leaves byte-identical
  // (e.g. the onset straddles its final step) must not be labeled anomalous,
  // so it is passed over for the next shuffled candidate.
  std::size_t made = 0;
  for (std::size_t k = 0; k < candidates.size() && made < target; ++k) {
    Trajectory& traj = corpus[candidates[k]];
    Trajectory modified = traj;
    switch (spec.kind) {
      case AnomalyKind::lane_departure:
        detail::apply_lane_departure(modified, spec.onset_s, severity);
        break;
      case AnomalyKind::drift_to_camera:
        detail::apply_drift(modified, spec.onset_s, severity);
        break;
      case AnomalyKind::abrupt_halt:
        detail::apply_halt(modified, spec.onset_s, severity);
        break;
    }
    if (modified.points == traj.points) continue;
    modified.label = 1;
    traj = std::move(modified);
    ++made;
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// key = value (de)serialization for scene and anomaly specs
// ---------------------------------------------------------------------------

inline void set_scene_key(SceneSpec& scene, const std::string& key,
                          const std::string& value,
                          const std::string& context = "scene") {
  const std::string ctx = context + " key '" + key + "'";
  if (key == "lanes") {
    scene.lanes = static_cast<int>(parse_int(value, ctx));
  } else if (key == "lane_spacing_px") {
    scene.lane_spacing_px = parse_double(value, ctx);
  } else if (key == "flow_axis") {
    scene.flow_axis = detail::parse_vec2(value, ctx);
  } else if (key == "speed_px_per_s") {
    const auto parts = split(value, ',');
    if (parts.size() != 2) {
      fail(Errc::parse_error, ctx + ": expected 'mean,jitter'");
    }
    scene.speed_mean_px_per_s = parse_double(parts[0], ctx);
    scene.speed_jitter_px_per_s = parse_double(parts[1], ctx);
  } else if (key == "duration_s") {
    scene.duration_s = parse_double(value, ctx);
  } else if (key == "vehicles_per_s") {
    scene.vehicles_per_s = parse_double(value, ctx);
  } else if (key == "noise_px") {
    scene.noise_px = parse_double(value, ctx);
  } else if (key == "sample_rate_hz") {
    scene.sample_rate_hz = parse_double(value, ctx);
  } else if (key == "seed") {
    scene.seed = static_cast<std::uint64_t>(parse_int(value, ctx));
  } else {
    fail(Errc::parse_error, context + ": unknown key '" + key + "'");
  }
}

inline SceneSpec parse_scene(std::string_view text,
                             const std::string& source = "scene") {
  SceneSpec scene;
  for (const auto& kv : parse_key_values(text, source)) {
    set_scene_key(scene, kv.key, kv.value,
                  source + ":" + std::to_string(kv.line));
  }
  return scene;
}

inline std::string format_scene(const SceneSpec& scene) {
  std::ostringstream out;
  out << "lanes = " << scene.lanes << '\n';
  out << "lane_spacing_px = " << format_double(scene.lane_spacing_px) << '\n';
  out << "flow_axis = " << format_double(scene.flow_axis.x) << ','
      << format_double(scene.flow_axis.y) << '\n';
  out << "speed_px_per_s = " << format_double(scene.speed_mean_px_per_s) << ','
      << format_double(scene.speed_jitter_px_per_s) << '\n';
  out << "duration_s = " << format_double(scene.duration_s) << '\n';
  out << "vehicles_per_s = " << format_double(scene.vehicles_per_s) << '\n';
  out << "noise_px = " << format_double(scene.noise_px) << '\n';
  out << "sample_rate_hz = " << format_double(scene.sample_rate_hz) << '\n';
  out << "seed = " << scene.seed << '\n';
  return out.str();
}

inline void set_anomaly_key(AnomalySpec& spec, const std::string& key,
                            const std::string& value,
                            const std::string& context = "anomaly") {
  const std::string ctx = context + " key '" + key + "'";
  if (key == "kind") {
    spec.kind = parse_anomaly_kind(value);
  } else if (key == "onset_s") {
    spec.onset_s = parse_double(value, ctx);
  } else if (key == "severity") {
    spec.severity = parse_double(value, ctx);
  } else if (key == "fraction") {
    spec.fraction = parse_double(value, ctx);
  } else {
    fail(Errc::parse_error, context + ": unknown key '" + key + "'");
  }
}

inline AnomalySpec parse_anomaly(std::string_view text,
                                 const std::string& source = "anomaly") {
  AnomalySpec spec;
  for (const auto& kv : parse_key_values(text, source)) {
    set_anomaly_key(spec, kv.key, kv.value,
                    source + ":" + std::to_string(kv.line));
  }
  return spec;
}

}  // namespace trajwatch
