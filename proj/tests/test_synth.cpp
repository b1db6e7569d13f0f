// Synthetic traffic generation and anomaly injection.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "trajwatch/synth.hpp"

using namespace trajwatch;

namespace {

// Largest perpendicular deviation of any point from the line through the
// track's endpoints.
double max_deviation_from_line(const Trajectory& traj) {
  const Vec2 a = traj.points.front().pos();
  const Vec2 b = traj.points.back().pos();
  const Vec2 dir = b - a;
  const double len = dir.norm();
  if (len == 0.0) return 0.0;
  double worst = 0.0;
  for (const auto& p : traj.points) {
    const Vec2 v = p.pos() - a;
    worst = std::max(worst, std::abs(dir.cross(v)) / len);
  }
  return worst;
}

}  // namespace

TEST_CASE("generation is deterministic and fully spec-driven") {
  SceneSpec scene;
  scene.duration_s = 30.0;
  scene.vehicles_per_s = 2.0;
  scene.noise_px = 1.5;
  scene.seed = 77;
  const auto a = gen_normal(scene);
  const auto b = gen_normal(scene);
  CHECK(a == b);
  REQUIRE(!a.empty());

  SceneSpec other = scene;
  other.seed = 78;
  CHECK(gen_normal(other) != a);
}

TEST_CASE("generated traffic matches the scene geometry") {
  SceneSpec scene;
  scene.duration_s = 40.0;
  scene.vehicles_per_s = 3.0;
  scene.noise_px = 0.0;
  scene.seed = 5;
  const auto corpus = gen_normal(scene);
  REQUIRE(corpus.size() > 50);

  const auto total_frames =
      std::llround(scene.duration_s * scene.sample_rate_hz);
  std::set<double> lane_xs;
  std::set<std::int64_t> ids;
  for (const auto& traj : corpus) {
    REQUIRE(!traj.empty());
    CHECK(ids.insert(traj.track_id).second);
    CHECK(traj.label == 0);
    CHECK(traj.sample_rate_hz == scene.sample_rate_hz);
    CHECK(traj.contiguous());
    CHECK(traj.first_frame() >= 0);
    // Every track runs to the end of the scene.
    CHECK(traj.last_frame() == total_frames - 1);

    // Noise-free tracks are exactly collinear and parked on a lane center.
    CHECK(max_deviation_from_line(traj) < 1e-9);
    lane_xs.insert(traj.points.front().cx);
    for (const auto& p : traj.points) {
      CHECK(p.cx == traj.points.front().cx);  // downward flow: constant x
      CHECK(p.w.has_value());
      CHECK(p.h.has_value());
    }
    // Strictly forward along +y.
    if (traj.size() >= 2) {
      CHECK(traj.points.back().cy > traj.points.front().cy);
    }
    CHECK((std::set<int>{2, 5, 7}.count(traj.points.front().class_id) == 1));
  }
  // Default 3 lanes spaced 60 px: centers 30, 90, 150.
  for (const double x : lane_xs) {
    CHECK((x == 30.0 || x == 90.0 || x == 150.0));
  }
  CHECK(lane_xs.size() == 3);  // all lanes see traffic at this volume
}

TEST_CASE("vehicle count concentrates near the Poisson mean") {
  SceneSpec scene;
  scene.duration_s = 50.0;
  scene.vehicles_per_s = 4.0;
  double mean_count = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    scene.seed = seed;
    mean_count += static_cast<double>(gen_normal(scene).size());
  }
  mean_count /= 20.0;
  // Mean of 20 draws from Poisson(200): sd ~ 3.2, so +-16 is ~5 sigma.
  CHECK(std::abs(mean_count - 200.0) < 16.0);
}

TEST_CASE("scene validation rejects nonsense") {
  SceneSpec scene;
  scene.lanes = 0;
  CHECK_THROWS_AS(gen_normal(scene), Error);
  scene = {};
  scene.flow_axis = {1.0, 1.0};
  CHECK_THROWS_AS(gen_normal(scene), Error);
  scene = {};
  scene.duration_s = 0.0;
  CHECK_THROWS_AS(gen_normal(scene), Error);
  scene = {};
  scene.noise_px = -1.0;
  CHECK_THROWS_AS(gen_normal(scene), Error);
}

TEST_CASE("lane departure bends sideways from onset only") {
  SceneSpec scene;
  scene.duration_s = 30.0;
  scene.vehicles_per_s = 1.0;
  scene.seed = 12;
  const auto corpus = gen_normal(scene);

  AnomalySpec spec;
  spec.kind = AnomalyKind::lane_departure;
  spec.onset_s = 4.0;
  spec.severity = 30.0;
  spec.fraction = 1.0;
  const auto injected = inject(corpus, spec, 99);
  REQUIRE(injected.size() == corpus.size());

  int perturbed = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& before = corpus[i];
    const auto& after = injected[i];
    CHECK(after.track_id == before.track_id);
    REQUIRE(after.size() == before.size());
    if (after.label == 0) {
      CHECK(after.points == before.points);
      continue;
    }
    ++perturbed;
    const Vec2 lateral{-1.0, 0.0};  // +y travel: perp() of (0,1) is (-1,0)
    for (std::size_t j = 0; j < before.points.size(); ++j) {
      const double elapsed =
          static_cast<double>(after.points[j].frame - after.points[0].frame) /
          after.sample_rate_hz;
      const Vec2 expect =
          before.points[j].pos() +
          std::max(0.0, elapsed - spec.onset_s) * 30.0 * lateral;
      CHECK(after.points[j].cx == Catch::Approx(expect.x).margin(1e-9));
      CHECK(after.points[j].cy == Catch::Approx(expect.y).margin(1e-9));
      // Frames, extent, class stay untouched.
      CHECK(after.points[j].frame == before.points[j].frame);
      CHECK(after.points[j].w == before.points[j].w);
      CHECK(after.points[j].class_id == before.points[j].class_id);
    }
  }
  CHECK(perturbed > 0);
}

TEST_CASE("abrupt halt freezes the vehicle after the decay") {
  SceneSpec scene;
  scene.duration_s = 30.0;
  scene.vehicles_per_s = 0.5;
  scene.seed = 3;
  const auto corpus = gen_normal(scene);

  AnomalySpec spec;
  spec.kind = AnomalyKind::abrupt_halt;
  spec.onset_s = 2.0;
  spec.severity = 1.0;  // one second to standstill
  spec.fraction = 1.0;
  const auto injected = inject(corpus, spec, 1);

  int checked = 0;
  for (const auto& traj : injected) {
    if (traj.label != 1) continue;
    if (traj.duration_sec() < 5.0) continue;
    ++checked;
    // Well past onset + decay the position must be constant.
    const auto& pts = traj.points;
    for (std::size_t j = 1; j < pts.size(); ++j) {
      const double elapsed =
          static_cast<double>(pts[j].frame - pts[0].frame) /
          traj.sample_rate_hz;
      if (elapsed <= spec.onset_s + *spec.severity + 0.2) continue;
      CHECK(pts[j].cx == pts[j - 1].cx);
      CHECK(pts[j].cy == pts[j - 1].cy);
    }
    // But it did move before the onset.
    CHECK(euclid(pts.front().pos(), pts.back().pos()) > 1.0);
  }
  CHECK(checked > 0);
}

TEST_CASE("drift bends the heading by the requested total angle") {
  SceneSpec scene;
  scene.duration_s = 30.0;
  scene.vehicles_per_s = 0.5;
  scene.seed = 8;
  const auto corpus = gen_normal(scene);

  AnomalySpec spec;
  spec.kind = AnomalyKind::drift_to_camera;
  spec.onset_s = 2.0;
  spec.severity = 0.5;
  spec.fraction = 1.0;
  const auto injected = inject(corpus, spec, 1);

  int checked = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& after = injected[i];
    if (after.label != 1) continue;
    if (after.duration_sec() < 10.0) continue;
    ++checked;
    // The final step direction is rotated ~severity from the original.
    const auto& a = corpus[i].points;
    const auto& b = after.points;
    const std::size_t n = a.size();
    const Vec2 step_before = a[n - 1].pos() - a[n - 2].pos();
    const Vec2 step_after = b[n - 1].pos() - b[n - 2].pos();
    const double angle = std::atan2(step_before.cross(step_after),
                                    step_before.dot(step_after));
    CHECK(angle == Catch::Approx(0.5).margin(1e-6));
    // Speed along the path is preserved (pure rotation of steps).
    CHECK(step_after.norm() == Catch::Approx(step_before.norm()).margin(1e-9));
  }
  CHECK(checked > 0);
}

TEST_CASE("injection honors fraction, candidacy, and determinism") {
  SceneSpec scene;
  scene.duration_s = 60.0;
  scene.vehicles_per_s = 1.5;
  scene.seed = 21;
  const auto corpus = gen_normal(scene);
  const auto n = corpus.size();

  AnomalySpec spec;
  spec.kind = AnomalyKind::lane_departure;
  spec.onset_s = 4.0;
  spec.fraction = 0.2;

  const auto injected = inject(corpus, spec, 7);
  const auto again = inject(corpus, spec, 7);
  CHECK(injected == again);

  std::size_t labeled = 0;
  for (const auto& traj : injected) {
    REQUIRE(traj.label.has_value());
    if (traj.label == 1) {
      ++labeled;
      // Only tracks that actually contain the onset can be perturbed.
      CHECK(traj.duration_sec() > spec.onset_s);
    }
  }
  CHECK(labeled == static_cast<std::size_t>(std::llround(0.2 * n)));

  // A different injection seed picks a different subset.
  const auto other = inject(corpus, spec, 8);
  CHECK(other != injected);

  // fraction 0 labels everything normal and changes nothing else.
  spec.fraction = 0.0;
  const auto none = inject(corpus, spec, 7);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(none[i].label == 0);
    CHECK(none[i].points == corpus[i].points);
  }

  // Asking for more perturbations than there are eligible tracks caps at
  // the candidate count instead of failing.
  spec.fraction = 1.0;
  spec.onset_s = 55.0;  // almost nothing lasts 55 s
  const auto capped = inject(corpus, spec, 7);
  std::size_t eligible = 0;
  std::size_t got = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (corpus[i].duration_sec() > spec.onset_s) ++eligible;
    if (capped[i].label == 1) ++got;
  }
  CHECK(got <= eligible);
}

TEST_CASE("injection validates its inputs") {
  const SceneSpec scene;
  AnomalySpec spec;
  CHECK_THROWS_AS(inject({}, spec, 1), Error);
  auto corpus = gen_normal(scene);
  spec.fraction = 1.5;
  CHECK_THROWS_AS(inject(corpus, spec, 1), Error);
  spec.fraction = 0.1;
  spec.onset_s = -1.0;
  CHECK_THROWS_AS(inject(corpus, spec, 1), Error);
  spec.onset_s = 4.0;
  spec.severity = 0.0;
  CHECK_THROWS_AS(inject(corpus, spec, 1), Error);
}

TEST_CASE("scene and anomaly specs round-trip through key=value text") {
  SceneSpec scene;
  scene.lanes = 5;
  scene.lane_spacing_px = 48.5;
  scene.flow_axis = {1.0, 0.0};
  scene.speed_mean_px_per_s = 97.25;
  scene.speed_jitter_px_per_s = 3.5;
  scene.duration_s = 123.0;
  scene.vehicles_per_s = 0.75;
  scene.noise_px = 2.25;
  scene.sample_rate_hz = 10.0;
  scene.seed = 987654321;
  CHECK(parse_scene(format_scene(scene)) == scene);
  CHECK(parse_scene(format_scene(SceneSpec{})) == SceneSpec{});

  AnomalySpec spec;
  spec.kind = AnomalyKind::abrupt_halt;
  spec.onset_s = 6.5;
  spec.severity = 2.0;
  spec.fraction = 0.25;
  const std::string text =
      "kind = abrupt_halt\nonset_s = 6.5\nseverity = 2\nfraction = 0.25\n";
  CHECK(parse_anomaly(text) == spec);

  CHECK_THROWS_AS(parse_scene("lanes = 3\nwheels = 4\n"), Error);
  CHECK_THROWS_AS(parse_anomaly("kind = wobble\n"), Error);
  CHECK(parse_anomaly_kind("drift_to_camera") == AnomalyKind::drift_to_camera);
  CHECK(default_severity(AnomalyKind::lane_departure) == 30.0);
  CHECK(default_severity(AnomalyKind::drift_to_camera) == 0.3);
  CHECK(default_severity(AnomalyKind::abrupt_halt) == 1.0);
}
