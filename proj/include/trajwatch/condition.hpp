#pragma once

// Data conditioning: class whitelist, travel-direction filter, gap filling
// with split-on-large-gap, and the minimum-presence filter, composed in that
// order. The composition is designed so applying it twice equals applying it
// once on corpora without direction reversals.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trajwatch/common.hpp"
#include "trajwatch/config.hpp"
#include "trajwatch/types.hpp"

namespace trajwatch {

// Assigns ids to the extra segments a large gap splits off. ordinal is 1 for
// the first split-off segment, 2 for the next, and so on; the leading segment
// keeps the original id. The default is a pure function of (id, ordinal) so
// batch conditioning and the streaming engine agree on segment ids.
using SplitIdAllocator =
    std::function<std::int64_t(std::int64_t track_id, int ordinal)>;

inline std::int64_t default_split_id(std::int64_t track_id, int ordinal) {
  // Always >= 2^20, so segment ids cannot collide with source ids below
  // 2^20 (note id 0 would degenerate without the +1). Injective while
  // original ids stay below 2^42 and a track splits fewer than 2^20 times.
  return (track_id + 1) * (std::int64_t{1} << 20) + ordinal;
}

namespace detail {

// Class of record for filtering purposes: the first observed point's class.
inline int track_class(const Trajectory& traj) {
  return traj.points.front().class_id;
}

// Linear interpolation at fraction alpha between two points; box extent is
// interpolated only when both endpoints carry it.
inline TrackPoint lerp_point(const TrackPoint& a, const TrackPoint& b,
                             std::int64_t frame, double alpha) {
  TrackPoint p;
  p.frame = frame;
  p.cx = a.cx + alpha * (b.cx - a.cx);
  p.cy = a.cy + alpha * (b.cy - a.cy);
  if (a.w && b.w) p.w = *a.w + alpha * (*b.w - *a.w);
  if (a.h && b.h) p.h = *a.h + alpha * (*b.h - *a.h);
  p.class_id = a.class_id;
  return p;
}

}  // namespace detail

// Removes tracks whose class is outside the whitelist (and empty tracks,
// which have no class at all).
inline std::vector<Trajectory> filter_classes(std::vector<Trajectory> tracks,
                                              const std::set<int>& whitelist) {
  std::vector<Trajectory> out;
  out.reserve(tracks.size());
  for (auto& traj : tracks) {
    if (traj.empty()) continue;
    if (whitelist.count(detail::track_class(traj)) == 0) continue;
    out.push_back(std::move(traj));
  }
  return out;
}

// Keeps tracks whose net displacement has a strictly positive component
// along flow_axis. Stationary and single-point tracks are removed.
inline std::vector<Trajectory> filter_direction(std::vector<Trajectory> tracks,
                                                Vec2 flow_axis) {
  std::vector<Trajectory> out;
  out.reserve(tracks.size());
  for (auto& traj : tracks) {
    if (traj.size() < 2) continue;
    const Vec2 net = traj.points.back().pos() - traj.points.front().pos();
    if (!(net.dot(flow_axis) > 0.0)) continue;
    out.push_back(std::move(traj));
  }
  return out;
}

// Keeps tracks observed for at least min_presence_frames samples.
inline std::vector<Trajectory> filter_presence(std::vector<Trajectory> tracks,
                                               int min_presence_frames) {
  std::vector<Trajectory> out;
  out.reserve(tracks.size());
  for (auto& traj : tracks) {
    if (static_cast<std::int64_t>(traj.size()) <
        static_cast<std::int64_t>(min_presence_frames)) {
      continue;
    }
    out.push_back(std::move(traj));
  }
  return out;
}

// Fills frame gaps of up to max_gap_frames missing frames by linear
// interpolation; a larger gap splits the track. The leading segment keeps
// the original id, later segments get ids from alloc. Every returned segment
// is contiguous, and all inherit the source label and sample rate.
inline std::vector<Trajectory> fill_gaps(
    const Trajectory& traj, int max_gap_frames,
    const SplitIdAllocator& alloc = default_split_id) {
  std::vector<Trajectory> segments;
  auto start_segment = [&]() {
    Trajectory seg;
    seg.sample_rate_hz = traj.sample_rate_hz;
    seg.label = traj.label;
    const int ordinal = static_cast<int>(segments.size());
    seg.track_id = ordinal == 0 ? traj.track_id : alloc(traj.track_id, ordinal);
    segments.push_back(std::move(seg));
  };
  start_segment();
  for (std::size_t i = 0; i < traj.points.size(); ++i) {
    const TrackPoint& p = traj.points[i];
    auto& seg = segments.back().points;
    if (!seg.empty()) {
      // By value: the interpolation loop below grows the segment vector,
      // which would invalidate a reference into it.
      const TrackPoint prev = seg.back();
      const std::int64_t gap = p.frame - prev.frame - 1;
      if (gap < 0) {
        fail(gap == -1 ? Errc::duplicate_frame : Errc::out_of_order_frames,
             "track " + std::to_string(traj.track_id) +
                 ": frames not strictly increasing at frame " +
                 std::to_string(p.frame));
      }
      if (gap > max_gap_frames) {
        start_segment();
      } else {
        for (std::int64_t j = 1; j <= gap; ++j) {
          const double alpha =
              static_cast<double>(j) / static_cast<double>(gap + 1);
          segments.back().points.push_back(
              detail::lerp_point(prev, p, prev.frame + j, alpha));
        }
      }
    }
    segments.back().points.push_back(p);
  }
  return segments;
}

// Full conditioning pass: whitelist -> direction -> gap fill -> presence.
// Presence runs last so interpolation counts toward it; direction runs before
// splitting so it judges the vehicle's whole observed path.
inline std::vector<Trajectory> condition(
    std::vector<Trajectory> tracks, const PipelineConfig& cfg,
    const SplitIdAllocator& alloc = default_split_id) {
  ensure_valid(cfg);
  tracks = filter_classes(std::move(tracks), cfg.class_whitelist);
  tracks = filter_direction(std::move(tracks), cfg.flow_axis);
  std::vector<Trajectory> filled;
  filled.reserve(tracks.size());
  for (const auto& traj : tracks) {
    for (auto& seg : fill_gaps(traj, cfg.max_gap_frames, alloc)) {
      filled.push_back(std::move(seg));
    }
  }
  return filter_presence(std::move(filled), cfg.min_presence_frames);
}

}  // namespace trajwatch
