#pragma once

// Core value types shared by every stage of the pipeline.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "trajwatch/common.hpp"

namespace trajwatch {

// One detection of one vehicle in one frame: bounding-box center plus
// optional box extent. class_id follows the detector's label space.
struct TrackPoint {
  std::int64_t frame = 0;
  double cx = 0.0;
  double cy = 0.0;
  std::optional<double> w;
  std::optional<double> h;
  int class_id = 0;

  Vec2 pos() const { return {cx, cy}; }

  friend bool operator==(const TrackPoint& a, const TrackPoint& b) {
    return a.frame == b.frame && a.cx == b.cx && a.cy == b.cy && a.w == b.w &&
           a.h == b.h && a.class_id == b.class_id;
  }
};

// One tracked vehicle: its per-frame points at sample_rate_hz, sorted by
// frame with unique frame indices. After conditioning the indices are also
// contiguous. label is ground truth where known: 0 normal, 1 anomalous.
struct Trajectory {
  std::int64_t track_id = 0;
  std::vector<TrackPoint> points;
  double sample_rate_hz = 5.0;
  std::optional<int> label;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  std::int64_t first_frame() const { return points.front().frame; }
  std::int64_t last_frame() const { return points.back().frame; }

  // Seconds spanned from the first point to the last.
  double duration_sec() const {
    if (points.size() < 2) return 0.0;
    return static_cast<double>(last_frame() - first_frame()) / sample_rate_hz;
  }

  // Index of `frame` in points, or -1 when absent. Points must be sorted.
  std::ptrdiff_t index_of(std::int64_t frame) const {
    const auto it = std::lower_bound(
        points.begin(), points.end(), frame,
        [](const TrackPoint& p, std::int64_t f) { return p.frame < f; });
    if (it == points.end() || it->frame != frame) return -1;
    return it - points.begin();
  }

  // True when frame indices are consecutive integers.
  bool contiguous() const {
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (points[i].frame != points[i - 1].frame + 1) return false;
    }
    return true;
  }

  friend bool operator==(const Trajectory& a, const Trajectory& b) {
    return a.track_id == b.track_id && a.points == b.points &&
           a.sample_rate_hz == b.sample_rate_hz && a.label == b.label;
  }
};

// One issued prediction: from anchor_pos (the last observed position, at
// anchor_frame) the model proposes positions for frames anchor_frame + 1
// through anchor_frame + horizon.size().
struct PredictionRecord {
  std::int64_t track_id = 0;
  std::int64_t anchor_frame = 0;
  Vec2 anchor_pos;
  std::vector<Vec2> horizon;

  friend bool operator==(const PredictionRecord& a, const PredictionRecord& b) {
    return a.track_id == b.track_id && a.anchor_frame == b.anchor_frame &&
           a.anchor_pos == b.anchor_pos && a.horizon == b.horizon;
  }
};

// One scored (prediction, detection-window) pair. ade is in pixels, angle in
// radians within [0, pi]. A score component is absent when that method was
// not requested. degenerate marks an angle whose value came from the
// degenerate-chord policy rather than the arccos formula.
struct AnomalyScore {
  std::int64_t track_id = 0;
  std::int64_t anchor_frame = 0;
  double window_sec = 0.0;
  std::optional<double> ade;
  std::optional<double> angle;
  bool ade_flag = false;
  bool angle_flag = false;
  bool degenerate = false;

  friend bool operator==(const AnomalyScore& a, const AnomalyScore& b) {
    return a.track_id == b.track_id && a.anchor_frame == b.anchor_frame &&
           a.window_sec == b.window_sec && a.ade == b.ade && a.angle == b.angle &&
           a.ade_flag == b.ade_flag && a.angle_flag == b.angle_flag &&
           a.degenerate == b.degenerate;
  }
};

// Canonical output order for score rows.
inline bool score_order(const AnomalyScore& a, const AnomalyScore& b) {
  if (a.track_id != b.track_id) return a.track_id < b.track_id;
  if (a.anchor_frame != b.anchor_frame) return a.anchor_frame < b.anchor_frame;
  return a.window_sec < b.window_sec;
}

}  // namespace trajwatch
