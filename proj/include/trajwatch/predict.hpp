#pragma once

// Prediction: the observation-window extractor, the predictor interface, the
// constant-velocity baseline, and the anchor-enumeration driver that turns
// conditioned trajectories into prediction records.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "trajwatch/common.hpp"
#include "trajwatch/config.hpp"
#include "trajwatch/types.hpp"

namespace trajwatch {

// The last t_in observed positions of a track, ending at the anchor, plus
// the step-to-step displacements derived from them. relative[i] is
// absolute[i + 1] - absolute[i], so it has one fewer entry.
struct PredictorInput {
  std::int64_t track_id = 0;
  std::int64_t anchor_frame = 0;
  std::vector<Vec2> absolute;
  std::vector<Vec2> relative;
};

// Builds a PredictorInput from the t_in_samples consecutive frames ending at
// anchor_frame. The track need not be conditioned, but those frames must all
// be present and consecutive.
inline PredictorInput make_input(const Trajectory& traj,
                                 std::int64_t anchor_frame, int t_in_samples) {
  if (t_in_samples < 1) {
    fail(Errc::invalid_argument, "t_in_samples must be >= 1, got " +
                                     std::to_string(t_in_samples));
  }
  const std::ptrdiff_t anchor_idx = traj.index_of(anchor_frame);
  if (anchor_idx < 0) {
    fail(Errc::insufficient_history,
         "track " + std::to_string(traj.track_id) + " has no frame " +
             std::to_string(anchor_frame));
  }
  if (anchor_idx + 1 < t_in_samples) {
    fail(Errc::insufficient_history,
         "track " + std::to_string(traj.track_id) + " has only " +
             std::to_string(anchor_idx + 1) + " samples at frame " +
             std::to_string(anchor_frame) + ", need " +
             std::to_string(t_in_samples));
  }
  const std::size_t begin = static_cast<std::size_t>(anchor_idx) -
                            static_cast<std::size_t>(t_in_samples - 1);
  // Sorted unique frames spanning exactly t_in - 1 steps means consecutive.
  if (traj.points[anchor_idx].frame - traj.points[begin].frame !=
      static_cast<std::int64_t>(t_in_samples - 1)) {
    fail(Errc::insufficient_history,
         "track " + std::to_string(traj.track_id) +
             " is missing frames in the observation window ending at " +
             std::to_string(anchor_frame));
  }
  PredictorInput input;
  input.track_id = traj.track_id;
  input.anchor_frame = anchor_frame;
  input.absolute.reserve(static_cast<std::size_t>(t_in_samples));
  for (std::size_t i = begin; i <= static_cast<std::size_t>(anchor_idx); ++i) {
    input.absolute.push_back(traj.points[i].pos());
  }
  input.relative.reserve(input.absolute.size() - 1);
  for (std::size_t i = 1; i < input.absolute.size(); ++i) {
    input.relative.push_back(input.absolute[i] - input.absolute[i - 1]);
  }
  return input;
}

// A trajectory predictor: given an observation window, propose positions for
// the next horizon_samples frames. Implementations must return exactly
// horizon_samples finite points.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string name() const = 0;
  // True when predict() may be called concurrently from several threads.
  virtual bool thread_safe() const { return false; }
  virtual std::vector<Vec2> predict(const PredictorInput& input,
                                    int horizon_samples) const = 0;
};

// Constant-velocity extrapolation: mean per-step displacement over the
// observation window, applied from the anchor position. The fixed summation
// order (ascending step index) keeps results bit-identical across callers.
inline std::vector<Vec2> constant_velocity_predict(const PredictorInput& input,
                                                   int horizon_samples) {
  if (horizon_samples < 1) {
    fail(Errc::invalid_argument, "horizon_samples must be >= 1, got " +
                                     std::to_string(horizon_samples));
  }
  if (input.absolute.empty()) {
    fail(Errc::invalid_argument, "predictor input has no observations");
  }
  Vec2 mean_step{0.0, 0.0};
  if (!input.relative.empty()) {
    Vec2 sum{0.0, 0.0};
    for (const Vec2 step : input.relative) sum = sum + step;
    mean_step = sum * (1.0 / static_cast<double>(input.relative.size()));
  }
  const Vec2 last = input.absolute.back();
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(horizon_samples));
  for (int k = 1; k <= horizon_samples; ++k) {
    out.push_back(last + static_cast<double>(k) * mean_step);
  }
  return out;
}

class ConstantVelocityPredictor final : public Predictor {
 public:
  std::string name() const override { return "constant_velocity"; }
  bool thread_safe() const override { return true; }
  std::vector<Vec2> predict(const PredictorInput& input,
                            int horizon_samples) const override {
    return constant_velocity_predict(input, horizon_samples);
  }
};

// Enumerates anchors over conditioned trajectories and issues predictions.
// A track of n samples gets anchors at sample counts t_in, t_in + stride,
// t_in + 2*stride, ... while the count fits; a track shorter than t_in gets
// none. Records preserve input track order, ascending anchors within a track.
inline std::vector<PredictionRecord> issue_predictions(
    std::span<const Trajectory> tracks, const PipelineConfig& cfg,
    const Predictor& predictor) {
  ensure_valid(cfg);
  if (cfg.prediction_stride < 1) {
    fail(Errc::invalid_argument, "prediction_stride must be >= 1, got " +
                                     std::to_string(cfg.prediction_stride));
  }
  const int t_in = cfg.t_in_samples();
  const int horizon = cfg.horizon_samples();
  std::vector<PredictionRecord> out;
  for (const auto& traj : tracks) {
    for (std::size_t count = static_cast<std::size_t>(t_in);
         count <= traj.size();
         count += static_cast<std::size_t>(cfg.prediction_stride)) {
      const TrackPoint& anchor = traj.points[count - 1];
      const auto input = make_input(traj, anchor.frame, t_in);
      PredictionRecord rec;
      rec.track_id = traj.track_id;
      rec.anchor_frame = anchor.frame;
      rec.anchor_pos = anchor.pos();
      rec.horizon = predictor.predict(input, horizon);
      if (rec.horizon.size() != static_cast<std::size_t>(horizon)) {
        fail(Errc::invalid_argument,
             "predictor '" + predictor.name() + "' returned " +
                 std::to_string(rec.horizon.size()) + " points, expected " +
                 std::to_string(horizon));
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace trajwatch
