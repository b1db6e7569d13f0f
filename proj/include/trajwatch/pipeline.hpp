#pragma once

// The streaming engine: consumes per-frame detection rows in arrival order,
// maintains per-track state (warmup buffer, gap interpolation, splits),
// issues predictions on the anchor stride, and scores each outstanding
// prediction incrementally as real frames arrive. Arithmetic and ordering
// mirror the batch path exactly, so a stream run and a batch run over the
// same rows produce bit-identical score rows.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "trajwatch/anomaly.hpp"
#include "trajwatch/common.hpp"
#include "trajwatch/condition.hpp"
#include "trajwatch/config.hpp"
#include "trajwatch/eval.hpp"
#include "trajwatch/io.hpp"
#include "trajwatch/predict.hpp"
#include "trajwatch/synth.hpp"
#include "trajwatch/types.hpp"

namespace trajwatch {

enum class TrackStatus {
  warming,   // buffering toward the first anchor
  eligible,  // has issued at least one prediction
  dropped,   // class outside the whitelist; rows ignored
};

// One anomaly alert: a score crossed its configured threshold when the
// window closed at `frame`.
struct AlertEvent {
  std::int64_t frame = 0;
  std::int64_t track_id = 0;
  double window_sec = 0.0;
  Method method = Method::ade;
  double score = 0.0;
  double threshold = 0.0;

  friend bool operator==(const AlertEvent& a, const AlertEvent& b) {
    return a.frame == b.frame && a.track_id == b.track_id &&
           a.window_sec == b.window_sec && a.method == b.method &&
           a.score == b.score && a.threshold == b.threshold;
  }
};

inline bool alert_order(const AlertEvent& a, const AlertEvent& b) {
  if (a.frame != b.frame) return a.frame < b.frame;
  if (a.track_id != b.track_id) return a.track_id < b.track_id;
  if (a.window_sec != b.window_sec) return a.window_sec < b.window_sec;
  return static_cast<int>(a.method) < static_cast<int>(b.method);
}

struct ThroughputReport {
  double trajectories_per_s = 0.0;  // predictions scored per wall second
  double vehicles_per_s = 0.0;      // unique vehicles per stream second
  double wall_time_s = 0.0;
  std::int64_t frames = 0;
  std::int64_t predictions = 0;
  std::int64_t vehicles = 0;
};

// A prediction still being scored against arriving frames.
struct OutstandingPrediction {
  PredictionRecord record;
  double ade_sum = 0.0;        // running sum of per-step distances
  int steps = 0;               // actual frames consumed so far
  std::size_t next_window = 0; // index into the engine's window list
};

// Mutable per-vehicle state. A large frame gap ends the current segment and
// starts a fresh one (new id, new warmup), mirroring the batch splitter.
struct TrackState {
  std::int64_t origin_id = 0;
  std::int64_t segment_id = 0;
  int next_split_ordinal = 1;
  bool class_ok = true;
  TrackStatus status = TrackStatus::warming;
  std::deque<TrackPoint> buffer;  // last t_in points of the current segment
  std::int64_t points_in_segment = 0;
  Vec2 segment_origin;
  bool has_points = false;
  TrackPoint last_point;
  std::vector<OutstandingPrediction> outstanding;
};

class StreamEngine {
 public:
  StreamEngine(const PipelineConfig& cfg, const Predictor& predictor,
               DegeneratePolicy policy, std::span<const double> windows_sec,
               SplitIdAllocator alloc = default_split_id)
      : cfg_(cfg),
        predictor_(&predictor),
        policy_(policy),
        alloc_(std::move(alloc)) {
    ensure_valid(cfg_);
    t_in_ = cfg_.t_in_samples();
    horizon_ = cfg_.horizon_samples();
    if (cfg_.prediction_stride < 1) {
      fail(Errc::invalid_argument, "prediction_stride must be >= 1, got " +
                                       std::to_string(cfg_.prediction_stride));
    }
    if (cfg_.min_presence_frames > t_in_) {
      // A stream cannot retroactively un-issue predictions for a track that
      // later turns out too short, so presence beyond the warmup is
      // unsupported; batch equivalence would break.
      fail(Errc::invalid_argument,
           "streaming requires min_presence_frames <= t_in samples (" +
               std::to_string(cfg_.min_presence_frames) + " > " +
               std::to_string(t_in_) + ")");
    }
    windows_.reserve(windows_sec.size());
    for (const double sec : windows_sec) {
      windows_.push_back({detail::checked_window_samples(sec, cfg_), sec});
    }
    std::sort(windows_.begin(), windows_.end(),
              [](const Window& a, const Window& b) {
                if (a.samples != b.samples) return a.samples < b.samples;
                return a.sec < b.sec;
              });
    do_flag_ = cfg_.ade_threshold || cfg_.angle_threshold;
  }

  // Feeds one detection. Rows of one track must arrive in strictly
  // increasing frame order.
  void push(const DetectionRow& row) {
    auto [it, inserted] = tracks_.try_emplace(row.track_id);
    TrackState& st = it->second;
    if (inserted) {
      ++tracks_seen_;
      st.origin_id = row.track_id;
      st.segment_id = row.track_id;
      st.class_ok = cfg_.class_whitelist.count(row.class_id) != 0;
      st.status = st.class_ok ? TrackStatus::warming : TrackStatus::dropped;
    }
    if (!st.class_ok) return;
    const TrackPoint pt{row.frame, row.cx, row.cy, row.w, row.h, row.class_id};
    if (!st.has_points) {
      handle_point(st, pt);
      return;
    }
    const std::int64_t gap = pt.frame - st.last_point.frame - 1;
    if (gap < 0) {
      fail(gap == -1 ? Errc::duplicate_frame : Errc::out_of_order_frames,
           "track " + std::to_string(row.track_id) + ": frame " +
               std::to_string(pt.frame) + " arrived after frame " +
               std::to_string(st.last_point.frame));
    }
    if (gap > cfg_.max_gap_frames) {
      // Too long offline: retire the segment and start a fresh one.
      abandon_outstanding(st);
      st.segment_id = alloc_(st.origin_id, st.next_split_ordinal++);
      st.buffer.clear();
      st.points_in_segment = 0;
      st.status = TrackStatus::warming;
      st.has_points = false;
      handle_point(st, pt);
      return;
    }
    // Bridge the short gap with the same interpolation the batch path uses.
    const TrackPoint prev = st.last_point;
    for (std::int64_t j = 1; j <= gap; ++j) {
      const double alpha = static_cast<double>(j) / static_cast<double>(gap + 1);
      handle_point(st, detail::lerp_point(prev, pt, prev.frame + j, alpha));
    }
    handle_point(st, pt);
  }

  // Marks end of stream: predictions still waiting on frames give up their
  // remaining windows, which are counted as skipped.
  void finish() {
    for (auto& [id, st] : tracks_) abandon_outstanding(st);
  }

  const std::vector<AnomalyScore>& scores() const { return scores_; }
  const std::vector<AlertEvent>& alerts() const { return alerts_; }
  std::int64_t predictions_issued() const { return predictions_issued_; }
  std::int64_t skipped() const { return skipped_; }
  std::int64_t tracks_seen() const { return tracks_seen_; }
  const TrackState* state_of(std::int64_t origin_id) const {
    const auto it = tracks_.find(origin_id);
    return it == tracks_.end() ? nullptr : &it->second;
  }

 private:
  struct Window {
    int samples;
    double sec;
  };

  void abandon_outstanding(TrackState& st) {
    for (const auto& o : st.outstanding) {
      skipped_ += static_cast<std::int64_t>(windows_.size() - o.next_window);
    }
    st.outstanding.clear();
  }

  void handle_point(TrackState& st, const TrackPoint& pt) {
    // Score every outstanding prediction against the arriving sample; the
    // accumulation order matches the batch kernel step for step.
    std::size_t keep = 0;
    for (std::size_t i = 0; i < st.outstanding.size(); ++i) {
      OutstandingPrediction o = std::move(st.outstanding[i]);
      ++o.steps;
      o.ade_sum += euclid(
          o.record.horizon[static_cast<std::size_t>(o.steps - 1)], pt.pos());
      while (o.next_window < windows_.size() &&
             windows_[o.next_window].samples == o.steps) {
        emit(o, pt);
        ++o.next_window;
      }
      if (o.next_window >= windows_.size() || o.steps >= horizon_) {
        // All windows served, or the horizon is exhausted; any window left
        // needs more predicted frames than exist and is skipped.
        skipped_ += static_cast<std::int64_t>(windows_.size() - o.next_window);
      } else {
        st.outstanding[keep++] = std::move(o);
      }
    }
    st.outstanding.resize(keep);

    // Append the sample to the segment.
    if (st.points_in_segment == 0) st.segment_origin = pt.pos();
    st.buffer.push_back(pt);
    if (st.buffer.size() > static_cast<std::size_t>(t_in_)) {
      st.buffer.pop_front();
    }
    ++st.points_in_segment;
    st.last_point = pt;
    st.has_points = true;

    // Anchor check: warmup done, on the stride grid, moving with the flow.
    if (st.points_in_segment < t_in_) return;
    if ((st.points_in_segment - t_in_) % cfg_.prediction_stride != 0) return;
    const Vec2 net = pt.pos() - st.segment_origin;
    if (!(net.dot(cfg_.flow_axis) > 0.0)) return;

    PredictorInput input;
    input.track_id = st.segment_id;
    input.anchor_frame = pt.frame;
    input.absolute.reserve(st.buffer.size());
    for (const auto& p : st.buffer) input.absolute.push_back(p.pos());
    input.relative.reserve(input.absolute.size() - 1);
    for (std::size_t i = 1; i < input.absolute.size(); ++i) {
      input.relative.push_back(input.absolute[i] - input.absolute[i - 1]);
    }
    auto horizon = predictor_->predict(input, horizon_);
    if (horizon.size() != static_cast<std::size_t>(horizon_)) {
      fail(Errc::invalid_argument,
           "predictor '" + predictor_->name() + "' returned " +
               std::to_string(horizon.size()) + " points, expected " +
               std::to_string(horizon_));
    }
    ++predictions_issued_;
    st.status = TrackStatus::eligible;
    st.outstanding.push_back(
        {PredictionRecord{st.segment_id, pt.frame, pt.pos(),
                          std::move(horizon)},
         0.0, 0, 0});
  }

  void emit(const OutstandingPrediction& o, const TrackPoint& pt) {
    AnomalyScore row;
    row.track_id = o.record.track_id;
    row.anchor_frame = o.record.anchor_frame;
    row.window_sec = windows_[o.next_window].sec;
    row.ade = o.ade_sum / static_cast<double>(o.steps);
    const Vec2 actual_chord = pt.pos() - o.record.anchor_pos;
    const Vec2 predicted_chord =
        o.record.horizon[static_cast<std::size_t>(o.steps - 1)] -
        o.record.anchor_pos;
    const auto angle =
        angle_between(actual_chord, predicted_chord, cfg_.degenerate_eps,
                      policy_);
    row.angle = angle.radians;
    row.degenerate = angle.degenerate;
    if (do_flag_) {
      row = flag(row, cfg_);
      if (row.ade_flag) {
        alerts_.push_back({pt.frame, row.track_id, row.window_sec, Method::ade,
                           *row.ade, *cfg_.ade_threshold});
      }
      if (row.angle_flag) {
        alerts_.push_back({pt.frame, row.track_id, row.window_sec,
                           Method::angle, *row.angle, *cfg_.angle_threshold});
      }
    }
    scores_.push_back(row);
  }

  PipelineConfig cfg_;
  const Predictor* predictor_;
  DegeneratePolicy policy_;
  SplitIdAllocator alloc_;
  int t_in_ = 0;
  int horizon_ = 0;
  bool do_flag_ = false;
  std::vector<Window> windows_;
  std::unordered_map<std::int64_t, TrackState> tracks_;
  std::vector<AnomalyScore> scores_;
  std::vector<AlertEvent> alerts_;
  std::int64_t predictions_issued_ = 0;
  std::int64_t skipped_ = 0;
  std::int64_t tracks_seen_ = 0;
};

struct StreamResult {
  std::vector<AnomalyScore> scores;  // canonical (track, anchor, window) order
  std::vector<AlertEvent> alerts;    // canonical (frame, track, window) order
  ThroughputReport throughput;
  std::int64_t skipped = 0;
};

// Runs the full streaming workflow over detection rows sorted by frame.
// With threads > 1 tracks are partitioned across per-thread engines; since
// track states never interact, the merged result is bit-identical to a
// single-threaded run. Timing covers processing only, not input parsing.
inline StreamResult run_stream(std::span<const DetectionRow> rows,
                               const PipelineConfig& cfg,
                               const Predictor& predictor,
                               DegeneratePolicy policy,
                               std::span<const double> windows_sec,
                               int threads = 1,
                               const SplitIdAllocator& alloc = default_split_id) {
  ensure_valid(cfg);
  if (threads < 1) {
    fail(Errc::invalid_argument,
         "threads must be >= 1, got " + std::to_string(threads));
  }
  if (threads > 1 && !predictor.thread_safe()) {
    fail(Errc::invalid_argument, "predictor '" + predictor.name() +
                                     "' is not thread-safe; use threads = 1");
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].frame < rows[i - 1].frame) {
      fail(Errc::out_of_order_frames,
           "row " + std::to_string(i) + " has frame " +
               std::to_string(rows[i].frame) + " after frame " +
               std::to_string(rows[i - 1].frame));
    }
  }

  StreamResult result;
  const auto t0 = std::chrono::steady_clock::now();
  if (threads == 1) {
    StreamEngine engine(cfg, predictor, policy, windows_sec, alloc);
    for (const auto& row : rows) engine.push(row);
    engine.finish();
    result.scores = engine.scores();
    result.alerts = engine.alerts();
    result.skipped = engine.skipped();
    result.throughput.predictions = engine.predictions_issued();
    result.throughput.vehicles = engine.tracks_seen();
  } else {
    // Partition rows by vehicle; per-track processing is independent, so
    // each engine sees its tracks' rows in the original arrival order.
    std::vector<std::vector<DetectionRow>> buckets(
        static_cast<std::size_t>(threads));
    for (const auto& row : rows) {
      buckets[static_cast<std::uint64_t>(row.track_id) %
              static_cast<std::uint64_t>(threads)]
          .push_back(row);
    }
    std::vector<std::unique_ptr<StreamEngine>> engines;
    engines.reserve(buckets.size());
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      engines.push_back(std::make_unique<StreamEngine>(cfg, predictor, policy,
                                                       windows_sec, alloc));
    }
    parallel_for(buckets.size(), threads, [&](std::size_t b) {
      for (const auto& row : buckets[b]) engines[b]->push(row);
      engines[b]->finish();
    });
    for (const auto& engine : engines) {
      result.scores.insert(result.scores.end(), engine->scores().begin(),
                           engine->scores().end());
      result.alerts.insert(result.alerts.end(), engine->alerts().begin(),
                           engine->alerts().end());
      result.skipped += engine->skipped();
      result.throughput.predictions += engine->predictions_issued();
      result.throughput.vehicles += engine->tracks_seen();
    }
  }
  std::sort(result.scores.begin(), result.scores.end(), score_order);
  std::sort(result.alerts.begin(), result.alerts.end(), alert_order);
  const auto t1 = std::chrono::steady_clock::now();

  auto& tp = result.throughput;
  tp.wall_time_s = std::chrono::duration<double>(t1 - t0).count();
  tp.frames = rows.empty() ? 0 : rows.back().frame - rows.front().frame + 1;
  const double wall = std::max(tp.wall_time_s, 1e-12);
  tp.trajectories_per_s = static_cast<double>(tp.predictions) / wall;
  const double stream_sec =
      static_cast<double>(tp.frames) / cfg.sample_rate_hz;
  tp.vehicles_per_s =
      stream_sec > 0.0 ? static_cast<double>(tp.vehicles) / stream_sec : 0.0;
  return result;
}

struct BenchResult {
  ThroughputReport median;  // run with the median trajectories_per_s
  std::vector<ThroughputReport> runs;
};

// Generates a scene, then times run_stream over it `reps` times (corpus
// generation and flattening stay outside the timed region). Reports the
// median-rate run; on even counts, the upper median.
inline BenchResult bench(const SceneSpec& scene, const PipelineConfig& cfg,
                         const Predictor& predictor, DegeneratePolicy policy,
                         std::span<const double> windows_sec, int reps = 5,
                         int threads = 1) {
  if (reps < 1) {
    fail(Errc::invalid_argument, "reps must be >= 1, got " + std::to_string(reps));
  }
  const auto corpus = gen_normal(scene);
  const auto rows = tracks_to_rows(corpus);
  BenchResult out;
  out.runs.reserve(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    out.runs.push_back(
        run_stream(rows, cfg, predictor, policy, windows_sec, threads)
            .throughput);
  }
  auto sorted = out.runs;
  std::sort(sorted.begin(), sorted.end(),
            [](const ThroughputReport& a, const ThroughputReport& b) {
              return a.trajectories_per_s < b.trajectories_per_s;
            });
  out.median = sorted[sorted.size() / 2];
  return out;
}

// ---------------------------------------------------------------------------
// Reaction budget
// ---------------------------------------------------------------------------

inline constexpr double kMphToMps = 0.44704;
inline constexpr double kDefaultTotalLeadSec = 9.0;
inline constexpr double kDefaultSpeedMps = 26.8224;  // 60 mph

struct BufferTime {
  double buffer_s = 0.0;
  double distance_m = 0.0;
};

// Time left to react after spending detection_window_s of the total lead,
// and the road distance that buys at the given speed. The window must leave
// a positive buffer.
inline BufferTime buffer_time(double total_lead_s, double detection_window_s,
                              double speed_m_per_s = kDefaultSpeedMps) {
  if (!(total_lead_s > 0.0)) {
    fail(Errc::invalid_argument, "total_lead_s must be positive");
  }
  if (detection_window_s < 0.0) {
    fail(Errc::invalid_argument, "detection_window_s must be >= 0");
  }
  if (!(speed_m_per_s > 0.0)) {
    fail(Errc::invalid_argument, "speed_m_per_s must be positive");
  }
  if (detection_window_s >= total_lead_s) {
    fail(Errc::non_positive_buffer,
         "detection window " + format_double(detection_window_s) +
             " s consumes the whole lead of " + format_double(total_lead_s) +
             " s");
  }
  const double buffer = total_lead_s - detection_window_s;
  return {buffer, buffer * speed_m_per_s};
}

}  // namespace trajwatch
