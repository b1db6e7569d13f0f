#pragma once

// Anomaly scoring: average displacement error between a prediction horizon
// and what the vehicle actually did, and the divergence angle between the
// actual and predicted chords from the anchor. Plus threshold flagging and
// the batch corpus driver.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "trajwatch/common.hpp"
#include "trajwatch/config.hpp"
#include "trajwatch/types.hpp"

namespace trajwatch {

// What to do when a chord is too short to define a direction.
enum class DegeneratePolicy {
  error,           // throw degenerate_chord
  max_divergence,  // pi when exactly one chord is degenerate, 0 when both are
  zero,            // 0 either way
};

inline const char* to_string(DegeneratePolicy policy) {
  switch (policy) {
    case DegeneratePolicy::error: return "error";
    case DegeneratePolicy::max_divergence: return "max_divergence";
    case DegeneratePolicy::zero: return "zero";
  }
  return "unknown";
}

struct AngleOutcome {
  double radians = 0.0;  // in [0, pi]
  bool degenerate = false;
};

namespace detail {

// Locates the actual frames a window needs: index of anchor_frame + 1 in
// `actual`, having checked that frames anchor+1 .. anchor+w are all present
// and consecutive, and that the window fits the prediction horizon.
struct WindowView {
  std::size_t first_idx = 0;  // index of frame anchor_frame + 1
  int w = 0;                  // samples in the window
};

inline int checked_window_samples(double window_sec,
                                  const PipelineConfig& cfg) {
  const int w = cfg.window_samples(window_sec);
  if (w < 1) {
    fail(Errc::invalid_argument,
         "window_sec " + format_double(window_sec) + " rounds to " +
             std::to_string(w) + " samples at " +
             format_double(cfg.sample_rate_hz) + " Hz; need >= 1");
  }
  return w;
}

inline WindowView resolve_window(const PredictionRecord& pred,
                                 const Trajectory& actual, double window_sec,
                                 const PipelineConfig& cfg) {
  const int w = checked_window_samples(window_sec, cfg);
  if (static_cast<std::size_t>(w) > pred.horizon.size()) {
    fail(Errc::window_exceeds_horizon,
         "window of " + std::to_string(w) + " samples exceeds horizon of " +
             std::to_string(pred.horizon.size()));
  }
  const std::ptrdiff_t first = actual.index_of(pred.anchor_frame + 1);
  const bool available =
      first >= 0 &&
      static_cast<std::size_t>(first) + static_cast<std::size_t>(w) <=
          actual.size() &&
      actual.points[static_cast<std::size_t>(first) + w - 1].frame ==
          pred.anchor_frame + w;
  if (!available) {
    fail(Errc::missing_actual_frames,
         "track " + std::to_string(pred.track_id) + " lacks frames " +
             std::to_string(pred.anchor_frame + 1) + ".." +
             std::to_string(pred.anchor_frame + w));
  }
  return {static_cast<std::size_t>(first), w};
}

}  // namespace detail

// Mean Euclidean distance between predicted and actual positions over the
// first w samples of the horizon.
inline double ade_score(const PredictionRecord& pred, const Trajectory& actual,
                        double window_sec, const PipelineConfig& cfg) {
  const auto view = detail::resolve_window(pred, actual, window_sec, cfg);
  double sum = 0.0;
  for (int k = 1; k <= view.w; ++k) {
    sum += euclid(pred.horizon[static_cast<std::size_t>(k - 1)],
                  actual.points[view.first_idx + k - 1].pos());
  }
  return sum / static_cast<double>(view.w);
}

// Angle in [0, pi] between the actual chord and the predicted chord. The
// cosine is clamped to [-1, 1] before arccos, so collinear chords cannot
// produce a domain error. Chords shorter than eps fall to the policy.
inline AngleOutcome angle_between(Vec2 actual_chord, Vec2 predicted_chord,
                                  double eps, DegeneratePolicy policy) {
  const double na = actual_chord.norm();
  const double np = predicted_chord.norm();
  const bool deg_a = na < eps;
  const bool deg_p = np < eps;
  if (deg_a || deg_p) {
    switch (policy) {
      case DegeneratePolicy::error:
        fail(Errc::degenerate_chord,
             "chord norms " + format_double(na) + " and " + format_double(np) +
                 " with eps " + format_double(eps));
      case DegeneratePolicy::max_divergence:
        // Both chords degenerate means both stood still: perfect agreement.
        return {deg_a == deg_p ? 0.0 : std::numbers::pi, true};
      case DegeneratePolicy::zero:
        return {0.0, true};
    }
  }
  const double cosine =
      std::clamp(actual_chord.dot(predicted_chord) / (na * np), -1.0, 1.0);
  return {std::acos(cosine), false};
}

// Divergence angle at a detection window: chords run from the anchor
// position to the actual position w samples later and to the predicted
// position w samples ahead.
inline AngleOutcome angle_score(const PredictionRecord& pred,
                                const Trajectory& actual, double window_sec,
                                const PipelineConfig& cfg,
                                DegeneratePolicy policy) {
  const auto view = detail::resolve_window(pred, actual, window_sec, cfg);
  const Vec2 actual_chord =
      actual.points[view.first_idx + view.w - 1].pos() - pred.anchor_pos;
  const Vec2 predicted_chord =
      pred.horizon[static_cast<std::size_t>(view.w - 1)] - pred.anchor_pos;
  return angle_between(actual_chord, predicted_chord, cfg.degenerate_eps,
                       policy);
}

// Applies strict-greater threshold flags to a score row. At least one
// threshold must be configured; a score component without a configured
// threshold is left unflagged.
inline AnomalyScore flag(AnomalyScore score, const PipelineConfig& cfg) {
  if (!cfg.ade_threshold && !cfg.angle_threshold) {
    fail(Errc::invalid_argument,
         "flagging requires ade_threshold and/or angle_threshold to be set");
  }
  score.ade_flag =
      score.ade && cfg.ade_threshold && *score.ade > *cfg.ade_threshold;
  score.angle_flag = score.angle && cfg.angle_threshold &&
                     *score.angle > *cfg.angle_threshold;
  return score;
}

struct CorpusScores {
  std::vector<AnomalyScore> scores;  // sorted by (track, anchor, window)
  std::int64_t skipped = 0;  // (prediction, window) pairs that could not score
};

// Scores every (prediction, window) pair against the actual trajectories.
// Pairs whose window exceeds the horizon, whose actual frames are missing,
// or whose track is absent are skipped and counted, not errors: a stream
// truncates trajectories mid-horizon as a matter of course. Rows carry both
// ade and angle; flags are applied only when thresholds are configured.
inline CorpusScores score_corpus(std::span<const PredictionRecord> preds,
                                 std::span<const Trajectory> tracks,
                                 std::span<const double> windows_sec,
                                 const PipelineConfig& cfg,
                                 DegeneratePolicy policy,
                                 int threads = 1) {
  ensure_valid(cfg);
  for (const double w : windows_sec) detail::checked_window_samples(w, cfg);
  std::unordered_map<std::int64_t, const Trajectory*> by_id;
  by_id.reserve(tracks.size());
  for (const auto& traj : tracks) by_id[traj.track_id] = &traj;

  const bool do_flag = cfg.ade_threshold || cfg.angle_threshold;
  struct Slot {
    std::vector<AnomalyScore> rows;
    std::int64_t skipped = 0;
  };
  std::vector<Slot> slots(preds.size());
  parallel_for(preds.size(), threads, [&](std::size_t i) {
    const PredictionRecord& pred = preds[i];
    Slot& slot = slots[i];
    const auto found = by_id.find(pred.track_id);
    if (found == by_id.end()) {
      slot.skipped += static_cast<std::int64_t>(windows_sec.size());
      return;
    }
    const Trajectory& actual = *found->second;
    for (const double window_sec : windows_sec) {
      AnomalyScore row;
      row.track_id = pred.track_id;
      row.anchor_frame = pred.anchor_frame;
      row.window_sec = window_sec;
      try {
        row.ade = ade_score(pred, actual, window_sec, cfg);
        const auto angle = angle_score(pred, actual, window_sec, cfg, policy);
        row.angle = angle.radians;
        row.degenerate = angle.degenerate;
      } catch (const Error& e) {
        if (e.code() == Errc::window_exceeds_horizon ||
            e.code() == Errc::missing_actual_frames) {
          ++slot.skipped;
          continue;
        }
        throw;
      }
      if (do_flag) row = flag(row, cfg);
      slot.rows.push_back(row);
    }
  });

  CorpusScores out;
  for (auto& slot : slots) {
    out.skipped += slot.skipped;
    for (auto& row : slot.rows) out.scores.push_back(row);
  }
  std::sort(out.scores.begin(), out.scores.end(), score_order);
  return out;
}

}  // namespace trajwatch
