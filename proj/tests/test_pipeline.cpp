// Streaming engine: warmup, anchor stride, incremental scoring, gap
// bridging and splits, alerts, thread partitioning, throughput, the
// benchmark driver, and the reaction-time budget. The central property is
// bit-exact agreement with the batch path over identical detection rows.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "trajwatch/pipeline.hpp"

using namespace trajwatch;

namespace {

std::vector<DetectionRow> straight_rows(std::int64_t id, std::int64_t first,
                                        int n, double x, double y0,
                                        double dy, int class_id = 2) {
  std::vector<DetectionRow> rows;
  for (int i = 0; i < n; ++i) {
    rows.push_back({first + i, id, class_id, x, y0 + dy * i, 40.0, 30.0, {}});
  }
  return rows;
}

struct BatchRun {
  std::vector<AnomalyScore> scores;
  std::int64_t skipped = 0;
  std::int64_t predictions = 0;
};

// The reference path: group, condition, predict, score — all offline.
BatchRun batch_over_rows(const std::vector<DetectionRow>& rows,
                         const PipelineConfig& cfg, DegeneratePolicy policy,
                         const std::vector<double>& windows, int threads = 1) {
  const auto tracks = rows_to_trajectories(rows, cfg);
  const auto conditioned = condition(tracks, cfg);
  const ConstantVelocityPredictor cv;
  const auto preds = issue_predictions(conditioned, cfg, cv);
  const auto out = score_corpus(preds, conditioned, windows, cfg, policy,
                                threads);
  return {out.scores, out.skipped, static_cast<std::int64_t>(preds.size())};
}

}  // namespace

TEST_CASE("warmup, stride, and horizon bound the emitted scores") {
  const PipelineConfig cfg;  // t_in 15, stride 5, horizon 25 at 5 Hz
  const ConstantVelocityPredictor cv;
  const auto windows = default_windows();  // 1,2,3,4,5,10,15,20,25 samples

  // 40 samples: anchors at counts 15,20,25,30,35,40. Remaining samples after
  // each anchor leave 9+8+7+6+5+0 scoreable (prediction, window) pairs and
  // 0+1+2+3+4+9 skipped ones.
  const auto rows = straight_rows(1, 0, 40, 30.0, 0.0, 2.0);
  const auto result =
      run_stream(rows, cfg, cv, DegeneratePolicy::error, windows);
  CHECK(result.throughput.predictions == 6);
  CHECK(result.scores.size() == 35);
  CHECK(result.skipped == 19);
  for (const auto& s : result.scores) {
    CHECK(s.ade == 0.0);  // constant-velocity traffic is predicted exactly
    CHECK(s.angle == 0.0);
    CHECK_FALSE(s.degenerate);
  }
  // Anchors land on the stride grid.
  std::vector<std::int64_t> anchors;
  for (const auto& s : result.scores) anchors.push_back(s.anchor_frame);
  std::sort(anchors.begin(), anchors.end());
  anchors.erase(std::unique(anchors.begin(), anchors.end()), anchors.end());
  CHECK(anchors == std::vector<std::int64_t>{14, 19, 24, 29, 34});

  // The batch path sees exactly the same scores and skip count.
  const auto batch = batch_over_rows(rows, cfg, DegeneratePolicy::error,
                                     windows);
  CHECK(batch.scores == result.scores);
  CHECK(batch.skipped == result.skipped);
  CHECK(batch.predictions == result.throughput.predictions);

  // One sample short of warmup: nothing is ever issued.
  const auto short_rows = straight_rows(1, 0, 14, 30.0, 0.0, 2.0);
  const auto none =
      run_stream(short_rows, cfg, cv, DegeneratePolicy::error, windows);
  CHECK(none.throughput.predictions == 0);
  CHECK(none.scores.empty());
  CHECK(none.skipped == 0);

  // Exactly t_in: one prediction, no frames left to score it.
  const auto exact_rows = straight_rows(1, 0, 15, 30.0, 0.0, 2.0);
  const std::vector<double> two_windows = {0.2, 1.0};
  const auto exact =
      run_stream(exact_rows, cfg, cv, DegeneratePolicy::error, two_windows);
  CHECK(exact.throughput.predictions == 1);
  CHECK(exact.scores.empty());
  CHECK(exact.skipped == 2);
}

TEST_CASE("anchors require the causal prefix to move with the flow") {
  const PipelineConfig cfg;
  const ConstantVelocityPredictor cv;
  StreamEngine engine(cfg, cv, DegeneratePolicy::error,
                      std::vector<double>{1.0});
  // 15 samples drifting against the flow, then a strong forward burst.
  for (int i = 0; i < 15; ++i) {
    engine.push({i, 5, 2, 30.0, 14.0 - i, {}, {}, {}});
  }
  CHECK(engine.predictions_issued() == 0);  // net backward at count 15
  for (int i = 15; i < 20; ++i) {
    engine.push({i, 5, 2, 30.0, 50.0 * (i - 14), {}, {}, {}});
  }
  CHECK(engine.predictions_issued() == 1);  // count 20 is net forward
}

TEST_CASE("track states move warming -> eligible, or drop on class") {
  const PipelineConfig cfg;
  const ConstantVelocityPredictor cv;
  StreamEngine engine(cfg, cv, DegeneratePolicy::error,
                      std::vector<double>{1.0});
  for (const auto& row : straight_rows(1, 0, 14, 30.0, 0.0, 2.0)) {
    engine.push(row);
  }
  REQUIRE(engine.state_of(1) != nullptr);
  CHECK(engine.state_of(1)->status == TrackStatus::warming);
  engine.push({14, 1, 2, 30.0, 28.0, {}, {}, {}});
  CHECK(engine.state_of(1)->status == TrackStatus::eligible);

  // A non-whitelisted class is dropped on sight and never scored.
  for (const auto& row : straight_rows(2, 0, 40, 90.0, 0.0, 2.0, 3)) {
    engine.push(row);
  }
  REQUIRE(engine.state_of(2) != nullptr);
  CHECK(engine.state_of(2)->status == TrackStatus::dropped);
  CHECK(engine.tracks_seen() == 2);
  engine.finish();
  for (const auto& s : engine.scores()) CHECK(s.track_id == 1);
}

TEST_CASE("short gaps are bridged exactly like the batch interpolator") {
  const PipelineConfig cfg;
  const std::vector<double> windows = {0.2, 1.0, 2.0};
  auto rows = straight_rows(3, 0, 30, 30.0, 0.0, 3.0);
  // Knock out frames 17 and 18: a 2-frame hole, within max_gap 5.
  rows.erase(rows.begin() + 17, rows.begin() + 19);
  const ConstantVelocityPredictor cv;
  const auto stream =
      run_stream(rows, cfg, cv, DegeneratePolicy::error, windows);
  const auto batch = batch_over_rows(rows, cfg, DegeneratePolicy::error,
                                     windows);
  CHECK(stream.scores == batch.scores);
  CHECK(stream.skipped == batch.skipped);
  REQUIRE(!stream.scores.empty());
  // The hole sits on the straight line, so interpolation is exact and the
  // constant-velocity predictions still land perfectly.
  for (const auto& s : stream.scores) CHECK(s.ade == 0.0);
}

TEST_CASE("a long gap splits the track mid-stream with the batch's ids") {
  const PipelineConfig cfg;  // max_gap 5
  const std::vector<double> windows = {0.2, 1.0};
  auto rows = straight_rows(4, 0, 20, 30.0, 0.0, 2.0);
  const auto later = straight_rows(4, 40, 20, 30.0, 200.0, 2.0);
  rows.insert(rows.end(), later.begin(), later.end());

  const ConstantVelocityPredictor cv;
  const auto stream =
      run_stream(rows, cfg, cv, DegeneratePolicy::error, windows);
  const auto batch = batch_over_rows(rows, cfg, DegeneratePolicy::error,
                                     windows);
  CHECK(stream.scores == batch.scores);
  CHECK(stream.skipped == batch.skipped);
  CHECK(batch.predictions == stream.throughput.predictions);

  // Each 20-sample segment: anchors at counts 15 and 20; the second anchor
  // has no following frames, so its windows are abandoned.
  CHECK(stream.throughput.predictions == 4);
  CHECK(stream.scores.size() == 4);
  CHECK(stream.skipped == 4);
  std::vector<std::int64_t> ids;
  for (const auto& s : stream.scores) ids.push_back(s.track_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  CHECK(ids == std::vector<std::int64_t>{4, default_split_id(4, 1)});
}

TEST_CASE("stream rejects regressing frames and bad configurations") {
  const PipelineConfig cfg;
  const ConstantVelocityPredictor cv;
  const std::vector<double> windows = {1.0};
  {
    StreamEngine engine(cfg, cv, DegeneratePolicy::error, windows);
    engine.push({5, 1, 2, 0.0, 0.0, {}, {}, {}});
    try {
      engine.push({5, 1, 2, 0.0, 1.0, {}, {}, {}});
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::duplicate_frame);
    }
  }
  {
    StreamEngine engine(cfg, cv, DegeneratePolicy::error, windows);
    engine.push({5, 1, 2, 0.0, 0.0, {}, {}, {}});
    try {
      engine.push({3, 1, 2, 0.0, 1.0, {}, {}, {}});
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::out_of_order_frames);
    }
  }
  // Presence demands beyond the warmup cannot be honored causally.
  PipelineConfig strict = cfg;
  strict.min_presence_frames = 16;
  CHECK_THROWS_AS(StreamEngine(strict, cv, DegeneratePolicy::error, windows),
                  Error);
  // Global frame order across tracks is validated by the driver.
  std::vector<DetectionRow> rows = {{10, 1, 2, 0.0, 0.0, {}, {}, {}},
                                    {9, 2, 2, 0.0, 0.0, {}, {}, {}}};
  CHECK_THROWS_AS(run_stream(rows, cfg, cv, DegeneratePolicy::error, windows),
                  Error);
  CHECK_THROWS_AS(
      run_stream({}, cfg, cv, DegeneratePolicy::error, windows, 0), Error);

  class Unsafe final : public Predictor {
   public:
    std::string name() const override { return "unsafe"; }
    std::vector<Vec2> predict(const PredictorInput& input,
                              int horizon_samples) const override {
      return constant_velocity_predict(input, horizon_samples);
    }
  };
  const Unsafe unsafe;
  CHECK_THROWS_AS(
      run_stream({}, cfg, unsafe, DegeneratePolicy::error, windows, 2), Error);
  CHECK_NOTHROW(
      run_stream({}, cfg, unsafe, DegeneratePolicy::error, windows, 1));
}

TEST_CASE("alerts fire when a closing window crosses its threshold") {
  PipelineConfig cfg;
  cfg.ade_threshold = 10.0;
  cfg.angle_threshold = 0.5;
  const std::vector<double> windows = {1.0};  // 5 samples

  // Straight for 20 frames, then a hard left turn with y frozen.
  auto rows = straight_rows(7, 0, 20, 30.0, 0.0, 10.0);
  for (int i = 0; i < 10; ++i) {
    rows.push_back({20 + i, 7, 2, 30.0 - 10.0 * (i + 1), 190.0, 40.0, 30.0, {}});
  }
  const ConstantVelocityPredictor cv;
  const auto result =
      run_stream(rows, cfg, cv, DegeneratePolicy::error, windows);

  REQUIRE(!result.alerts.empty());
  CHECK(std::is_sorted(result.alerts.begin(), result.alerts.end(),
                       alert_order));
  // The prediction anchored at frame 19 extrapolates straight on; its 1 s
  // window closes at frame 24 with the vehicle 30*sqrt(2) px off the line on
  // average, which crosses both thresholds.
  bool saw_ade_at_24 = false;
  for (const auto& a : result.alerts) {
    CHECK(a.track_id == 7);
    if (a.method == Method::ade) {
      CHECK(a.score > 10.0);
      CHECK(a.threshold == 10.0);
    } else {
      CHECK(a.score > 0.5);
      CHECK(a.threshold == 0.5);
    }
    if (a.frame == 24 && a.method == Method::ade) saw_ade_at_24 = true;
    // Every alert corresponds to a flagged score row whose window closed at
    // the alert frame: anchor = frame - window samples.
    const auto match = std::find_if(
        result.scores.begin(), result.scores.end(), [&](const AnomalyScore& s) {
          return s.track_id == a.track_id && s.window_sec == a.window_sec &&
                 s.anchor_frame == a.frame - 5;
        });
    REQUIRE(match != result.scores.end());
    if (a.method == Method::ade) {
      CHECK(match->ade_flag);
      CHECK(*match->ade == a.score);
    } else {
      CHECK(match->angle_flag);
      CHECK(*match->angle == a.score);
    }
  }
  CHECK(saw_ade_at_24);
  // And conversely: every flagged row has its alert.
  std::size_t flagged = 0;
  for (const auto& s : result.scores) {
    flagged += (s.ade_flag ? 1u : 0u) + (s.angle_flag ? 1u : 0u);
  }
  CHECK(flagged == result.alerts.size());
}

TEST_CASE("stream equals batch on a noisy, gappy, injected corpus") {
  const PipelineConfig cfg;
  SceneSpec scene;
  scene.duration_s = 45.0;
  scene.vehicles_per_s = 2.0;
  scene.noise_px = 1.0;
  scene.seed = 31;
  auto corpus = gen_normal(scene);
  AnomalySpec spec;
  spec.kind = AnomalyKind::lane_departure;
  spec.fraction = 0.15;
  spec.onset_s = 4.0;
  corpus = inject(std::move(corpus), spec, 5);

  auto rows = tracks_to_rows(corpus);
  // Drop 4% of detections to exercise gap bridging.
  std::mt19937_64 rng(123);
  std::bernoulli_distribution drop(0.04);
  std::vector<DetectionRow> kept;
  kept.reserve(rows.size());
  for (const auto& row : rows) {
    if (!drop(rng)) kept.push_back(row);
  }
  // Punch a 10-frame hole into one long normal track to force a split.
  std::int64_t victim = -1;
  std::int64_t hole_start = 0;
  for (const auto& traj : corpus) {
    if (traj.label == 0 && traj.size() >= 80) {
      victim = traj.track_id;
      hole_start = traj.first_frame() + 25;
      break;
    }
  }
  REQUIRE(victim >= 0);
  kept.erase(std::remove_if(kept.begin(), kept.end(),
                            [&](const DetectionRow& r) {
                              return r.track_id == victim &&
                                     r.frame >= hole_start &&
                                     r.frame < hole_start + 10;
                            }),
             kept.end());

  const ConstantVelocityPredictor cv;
  const auto windows = default_windows();
  const auto policy = DegeneratePolicy::max_divergence;

  const auto stream1 = run_stream(kept, cfg, cv, policy, windows, 1);
  const auto stream4 = run_stream(kept, cfg, cv, policy, windows, 4);
  const auto batch1 = batch_over_rows(kept, cfg, policy, windows, 1);
  const auto batch4 = batch_over_rows(kept, cfg, policy, windows, 4);

  REQUIRE(stream1.scores.size() > 1000);  // the corpus is non-trivial
  CHECK(stream1.scores == stream4.scores);
  CHECK(stream1.skipped == stream4.skipped);
  CHECK(batch1.scores == batch4.scores);
  CHECK(batch1.skipped == batch4.skipped);
  CHECK(stream1.scores == batch1.scores);
  CHECK(stream1.skipped == batch1.skipped);
  CHECK(stream1.throughput.predictions == batch1.predictions);
  CHECK(stream4.throughput.predictions == batch1.predictions);

  // The punched track contributed a split segment.
  const std::int64_t split_id = default_split_id(victim, 1);
  const bool has_split =
      std::any_of(stream1.scores.begin(), stream1.scores.end(),
                  [&](const AnomalyScore& s) { return s.track_id == split_id; });
  CHECK(has_split);
}

TEST_CASE("throughput accounting is consistent with the stream") {
  const PipelineConfig cfg;
  const ConstantVelocityPredictor cv;
  std::vector<DetectionRow> rows = straight_rows(1, 10, 40, 30.0, 0.0, 2.0);
  const auto more = straight_rows(2, 10, 40, 90.0, 0.0, 2.0);
  rows.insert(rows.end(), more.begin(), more.end());
  std::sort(rows.begin(), rows.end(),
            [](const DetectionRow& a, const DetectionRow& b) {
              if (a.frame != b.frame) return a.frame < b.frame;
              return a.track_id < b.track_id;
            });
  const auto result = run_stream(rows, cfg, cv, DegeneratePolicy::error,
                                 std::vector<double>{1.0});
  const auto& tp = result.throughput;
  CHECK(tp.frames == 40);  // frames 10..49 inclusive
  CHECK(tp.vehicles == 2);
  CHECK(tp.predictions == 12);
  CHECK(tp.wall_time_s > 0.0);
  CHECK(tp.trajectories_per_s ==
        Catch::Approx(tp.predictions / tp.wall_time_s).epsilon(1e-9));
  // 2 vehicles over 8 seconds of stream.
  CHECK(tp.vehicles_per_s == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("bench times repeated runs and reports the median") {
  SceneSpec scene;
  scene.duration_s = 20.0;
  scene.vehicles_per_s = 2.0;
  scene.seed = 17;
  const PipelineConfig cfg;
  const ConstantVelocityPredictor cv;
  const auto windows = default_windows();

  const auto out =
      bench(scene, cfg, cv, DegeneratePolicy::max_divergence, windows, 4, 1);
  REQUIRE(out.runs.size() == 4);
  for (const auto& run : out.runs) {
    CHECK(run.predictions == out.runs[0].predictions);  // same corpus each rep
    CHECK(run.vehicles == out.runs[0].vehicles);
  }
  std::vector<double> rates;
  for (const auto& run : out.runs) rates.push_back(run.trajectories_per_s);
  std::sort(rates.begin(), rates.end());
  CHECK(out.median.trajectories_per_s == rates[2]);  // upper median of 4

  CHECK_THROWS_AS(bench(scene, cfg, cv, DegeneratePolicy::max_divergence,
                        windows, 0, 1),
                  Error);
}

TEST_CASE("reaction budget subtracts the window from the total lead") {
  // Defaults: 9 s of lead at 60 mph (26.8224 m/s).
  CHECK(kDefaultSpeedMps == Catch::Approx(60.0 * kMphToMps).margin(1e-12));

  const auto short_window = buffer_time(9.0, 0.2);
  CHECK(short_window.buffer_s == Catch::Approx(8.8).margin(1e-12));
  CHECK(short_window.distance_m == Catch::Approx(236.03712).margin(1e-9));

  const auto mid_window = buffer_time(9.0, 1.0);
  CHECK(mid_window.buffer_s == Catch::Approx(8.0).margin(1e-12));
  CHECK(mid_window.distance_m == Catch::Approx(214.5792).margin(1e-9));

  const auto three = buffer_time(9.0, 3.0);
  CHECK(three.buffer_s == Catch::Approx(6.0).margin(1e-12));
  CHECK(three.distance_m == Catch::Approx(160.9344).margin(1e-9));

  const auto widest = buffer_time(9.0, 5.0);
  CHECK(widest.buffer_s == Catch::Approx(4.0).margin(1e-12));
  CHECK(widest.distance_m == Catch::Approx(107.2896).margin(1e-9));

  // A custom speed scales the distance linearly.
  const auto slow = buffer_time(9.0, 1.0, 10.0);
  CHECK(slow.distance_m == Catch::Approx(80.0).margin(1e-12));

  // The window must leave a positive buffer.
  try {
    buffer_time(9.0, 9.0);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::non_positive_buffer);
  }
  CHECK_THROWS_AS(buffer_time(9.0, 10.0), Error);
  CHECK_THROWS_AS(buffer_time(0.0, 1.0), Error);
  CHECK_THROWS_AS(buffer_time(9.0, -1.0), Error);
  CHECK_THROWS_AS(buffer_time(9.0, 1.0, 0.0), Error);
}
