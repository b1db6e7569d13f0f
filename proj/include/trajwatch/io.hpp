#pragma once

// File formats: per-frame track CSV, prediction JSONL, and score CSV.
// All floating-point output uses shortest-round-trip formatting, so
// write -> read is an identity on every field.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trajwatch/common.hpp"
#include "trajwatch/config.hpp"
#include "trajwatch/types.hpp"

namespace trajwatch {

// One CSV row: a single detection, before grouping into trajectories.
struct DetectionRow {
  std::int64_t frame = 0;
  std::int64_t track_id = 0;
  int class_id = 0;
  double cx = 0.0;
  double cy = 0.0;
  std::optional<double> w;
  std::optional<double> h;
  std::optional<int> label;

  friend bool operator==(const DetectionRow& a, const DetectionRow& b) {
    return a.frame == b.frame && a.track_id == b.track_id &&
           a.class_id == b.class_id && a.cx == b.cx && a.cy == b.cy &&
           a.w == b.w && a.h == b.h && a.label == b.label;
  }
};

inline constexpr std::string_view kTrackCsvHeader =
    "frame,track_id,class_id,cx,cy,w,h,label";
inline constexpr std::string_view kScoreCsvHeader =
    "track_id,anchor_frame,window_sec,ade,angle,ade_flag,angle_flag,degenerate";

// ---------------------------------------------------------------------------
// Track CSV
// ---------------------------------------------------------------------------

inline std::vector<DetectionRow> parse_track_rows(std::string_view text,
                                                  const std::string& source) {
  const auto lines = split(text, '\n');
  if (lines.empty() || trim(lines[0]) != kTrackCsvHeader) {
    fail(Errc::parse_error,
         source + ":1: expected header '" + std::string(kTrackCsvHeader) + "'");
  }
  std::vector<DetectionRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    const std::string ctx = source + ":" + std::to_string(i + 1);
    const auto f = split(line, ',');
    if (f.size() != 8) {
      fail(Errc::parse_error,
           ctx + ": expected 8 fields, got " + std::to_string(f.size()));
    }
    DetectionRow row;
    row.frame = parse_int(f[0], ctx + " frame");
    row.track_id = parse_int(f[1], ctx + " track_id");
    row.class_id = static_cast<int>(parse_int(f[2], ctx + " class_id"));
    row.cx = parse_double(f[3], ctx + " cx");
    row.cy = parse_double(f[4], ctx + " cy");
    if (!trim(f[5]).empty()) row.w = parse_double(f[5], ctx + " w");
    if (!trim(f[6]).empty()) row.h = parse_double(f[6], ctx + " h");
    if (!trim(f[7]).empty()) {
      const auto label = parse_int(f[7], ctx + " label");
      if (label != 0 && label != 1) {
        fail(Errc::parse_error, ctx + ": label must be 0 or 1, got " +
                                    std::to_string(label));
      }
      row.label = static_cast<int>(label);
    }
    rows.push_back(row);
  }
  return rows;
}

// Groups rows into per-track trajectories sorted by frame. Rejects a repeated
// frame within a track and rows of one track that disagree on the label.
inline std::vector<Trajectory> rows_to_trajectories(
    std::span<const DetectionRow> rows, const PipelineConfig& cfg) {
  std::map<std::int64_t, Trajectory> by_id;
  std::map<std::int64_t, std::optional<int>> labels;
  for (const auto& row : rows) {
    auto& traj = by_id[row.track_id];
    traj.track_id = row.track_id;
    traj.sample_rate_hz = cfg.sample_rate_hz;
    traj.points.push_back(
        {row.frame, row.cx, row.cy, row.w, row.h, row.class_id});
    auto& label = labels[row.track_id];
    if (row.label) {
      if (label && *label != *row.label) {
        fail(Errc::conflicting_label,
             "track " + std::to_string(row.track_id) + " labeled both " +
                 std::to_string(*label) + " and " + std::to_string(*row.label));
      }
      label = row.label;
    }
  }
  std::vector<Trajectory> out;
  out.reserve(by_id.size());
  for (auto& [id, traj] : by_id) {
    std::sort(traj.points.begin(), traj.points.end(),
              [](const TrackPoint& a, const TrackPoint& b) {
                return a.frame < b.frame;
              });
    for (std::size_t i = 1; i < traj.points.size(); ++i) {
      if (traj.points[i].frame == traj.points[i - 1].frame) {
        fail(Errc::duplicate_frame,
             "track " + std::to_string(id) + " has frame " +
                 std::to_string(traj.points[i].frame) + " twice");
      }
    }
    traj.label = labels[id];
    out.push_back(std::move(traj));
  }
  return out;
}

// Keeps every k-th frame of each track (phase 0, counted from the track's
// first frame) and renumbers retained frames new = old / k so the retained
// samples are consecutive at the reduced rate.
inline std::vector<Trajectory> decimate_tracks(std::vector<Trajectory> tracks,
                                               double from_hz,
                                               const PipelineConfig& cfg) {
  if (!(from_hz > 0.0) || !(cfg.sample_rate_hz > 0.0)) {
    fail(Errc::invalid_argument, "decimation rates must be positive");
  }
  const auto k = std::llround(from_hz / cfg.sample_rate_hz);
  if (k < 1 ||
      std::abs(from_hz / cfg.sample_rate_hz - static_cast<double>(k)) > 1e-9) {
    fail(Errc::invalid_argument,
         "decimation factor " + format_double(from_hz / cfg.sample_rate_hz) +
             " is not a positive integer");
  }
  if (k == 1) return tracks;
  for (auto& traj : tracks) {
    std::vector<TrackPoint> kept;
    if (!traj.points.empty()) {
      const std::int64_t first = traj.points.front().frame;
      for (const auto& p : traj.points) {
        if ((p.frame - first) % k == 0) {
          TrackPoint q = p;
          q.frame = p.frame / k;
          kept.push_back(q);
        }
      }
    }
    traj.points = std::move(kept);
  }
  return tracks;
}

// Reads a track CSV file. When decimate_from_hz is given, the file is assumed
// to be sampled at that rate and is decimated down to cfg.sample_rate_hz.
inline std::vector<Trajectory> read_tracks(
    const std::string& path, const PipelineConfig& cfg,
    std::optional<double> decimate_from_hz = std::nullopt) {
  const auto rows = parse_track_rows(read_text_file(path), path);
  auto tracks = rows_to_trajectories(rows, cfg);
  if (decimate_from_hz) {
    tracks = decimate_tracks(std::move(tracks), *decimate_from_hz, cfg);
  }
  return tracks;
}

inline std::string format_tracks(std::span<const Trajectory> tracks) {
  // Rows come out sorted by (frame, track_id): the on-disk order a live
  // detector would produce, and the order the streaming engine expects.
  struct Flat {
    std::int64_t frame;
    std::int64_t track_id;
    const TrackPoint* point;
    std::optional<int> label;
  };
  std::vector<Flat> flat;
  for (const auto& traj : tracks) {
    for (const auto& p : traj.points) {
      flat.push_back({p.frame, traj.track_id, &p, traj.label});
    }
  }
  std::sort(flat.begin(), flat.end(), [](const Flat& a, const Flat& b) {
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.track_id < b.track_id;
  });
  std::ostringstream out;
  out << kTrackCsvHeader << '\n';
  for (const auto& row : flat) {
    out << row.frame << ',' << row.track_id << ',' << row.point->class_id << ','
        << format_double(row.point->cx) << ',' << format_double(row.point->cy)
        << ',';
    if (row.point->w) out << format_double(*row.point->w);
    out << ',';
    if (row.point->h) out << format_double(*row.point->h);
    out << ',';
    if (row.label) out << *row.label;
    out << '\n';
  }
  return out.str();
}

// Returns the number of rows written.
inline std::int64_t write_tracks(std::span<const Trajectory> tracks,
                                 const std::string& path) {
  write_text_file(path, format_tracks(tracks));
  std::int64_t rows = 0;
  for (const auto& traj : tracks) rows += static_cast<std::int64_t>(traj.size());
  return rows;
}

// Flattens trajectories to detection rows in (frame, track_id) order — the
// stream-feed order.
inline std::vector<DetectionRow> tracks_to_rows(
    std::span<const Trajectory> tracks) {
  std::vector<DetectionRow> rows;
  for (const auto& traj : tracks) {
    for (const auto& p : traj.points) {
      rows.push_back({p.frame, traj.track_id, p.class_id, p.cx, p.cy, p.w, p.h,
                      traj.label});
    }
  }
  std::sort(rows.begin(), rows.end(),
            [](const DetectionRow& a, const DetectionRow& b) {
              if (a.frame != b.frame) return a.frame < b.frame;
              return a.track_id < b.track_id;
            });
  return rows;
}

// ---------------------------------------------------------------------------
// Prediction JSONL
// ---------------------------------------------------------------------------

inline std::string format_predictions(std::span<const PredictionRecord> preds) {
  std::ostringstream out;
  for (const auto& rec : preds) {
    nlohmann::json j;
    j["track_id"] = rec.track_id;
    j["anchor_frame"] = rec.anchor_frame;
    j["anchor"] = {rec.anchor_pos.x, rec.anchor_pos.y};
    auto horizon = nlohmann::json::array();
    for (const auto& p : rec.horizon) horizon.push_back({p.x, p.y});
    j["horizon"] = std::move(horizon);
    out << j.dump() << '\n';
  }
  return out.str();
}

inline void write_predictions(std::span<const PredictionRecord> preds,
                              const std::string& path) {
  write_text_file(path, format_predictions(preds));
}

// Parses prediction JSONL. Every record must carry the same horizon length
// (one model, one horizon), and (track_id, anchor_frame) must be unique.
// Records come back sorted by that key.
inline std::vector<PredictionRecord> parse_predictions(
    std::string_view text, const std::string& source) {
  std::vector<PredictionRecord> out;
  int line_no = 0;
  std::optional<std::size_t> horizon_len;
  for (const std::string_view line_raw : split(text, '\n')) {
    ++line_no;
    const std::string_view line = trim(line_raw);
    if (line.empty()) continue;
    const std::string ctx = source + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_error, ctx + ": " + e.what());
    }
    PredictionRecord rec;
    try {
      rec.track_id = j.at("track_id").get<std::int64_t>();
      rec.anchor_frame = j.at("anchor_frame").get<std::int64_t>();
      const auto& anchor = j.at("anchor");
      if (!anchor.is_array() || anchor.size() != 2) {
        fail(Errc::parse_error, ctx + ": anchor must be [cx, cy]");
      }
      rec.anchor_pos = {anchor[0].get<double>(), anchor[1].get<double>()};
      const auto& horizon = j.at("horizon");
      if (!horizon.is_array()) {
        fail(Errc::parse_error, ctx + ": horizon must be an array");
      }
      for (const auto& p : horizon) {
        if (!p.is_array() || p.size() != 2) {
          fail(Errc::parse_error, ctx + ": horizon entries must be [cx, cy]");
        }
        rec.horizon.push_back({p[0].get<double>(), p[1].get<double>()});
      }
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_error, ctx + ": " + e.what());
    }
    if (rec.horizon.empty()) {
      fail(Errc::parse_error, ctx + ": horizon must contain at least one point");
    }
    if (!horizon_len) {
      horizon_len = rec.horizon.size();
    } else if (rec.horizon.size() != *horizon_len) {
      fail(Errc::inconsistent_horizon,
           ctx + ": horizon length " + std::to_string(rec.horizon.size()) +
               " differs from earlier records' " + std::to_string(*horizon_len));
    }
    out.push_back(std::move(rec));
  }
  std::sort(out.begin(), out.end(),
            [](const PredictionRecord& a, const PredictionRecord& b) {
              if (a.track_id != b.track_id) return a.track_id < b.track_id;
              return a.anchor_frame < b.anchor_frame;
            });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].track_id == out[i - 1].track_id &&
        out[i].anchor_frame == out[i - 1].anchor_frame) {
      fail(Errc::parse_error,
           source + ": duplicate prediction for track " +
               std::to_string(out[i].track_id) + " anchor " +
               std::to_string(out[i].anchor_frame));
    }
  }
  return out;
}

inline std::vector<PredictionRecord> read_external_predictions(
    const std::string& path) {
  return parse_predictions(read_text_file(path), path);
}

// ---------------------------------------------------------------------------
// Score CSV
// ---------------------------------------------------------------------------

inline std::string format_scores(std::span<const AnomalyScore> scores) {
  std::ostringstream out;
  out << kScoreCsvHeader << '\n';
  for (const auto& s : scores) {
    out << s.track_id << ',' << s.anchor_frame << ','
        << format_double(s.window_sec) << ',';
    if (s.ade) out << format_double(*s.ade);
    out << ',';
    if (s.angle) out << format_double(*s.angle);
    out << ',' << (s.ade_flag ? 1 : 0) << ',' << (s.angle_flag ? 1 : 0) << ','
        << (s.degenerate ? 1 : 0) << '\n';
  }
  return out.str();
}

inline void write_scores(std::span<const AnomalyScore> scores,
                         const std::string& path) {
  write_text_file(path, format_scores(scores));
}

inline std::vector<AnomalyScore> parse_scores(std::string_view text,
                                              const std::string& source) {
  const auto lines = split(text, '\n');
  if (lines.empty() || trim(lines[0]) != kScoreCsvHeader) {
    fail(Errc::parse_error,
         source + ":1: expected header '" + std::string(kScoreCsvHeader) + "'");
  }
  std::vector<AnomalyScore> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    const std::string ctx = source + ":" + std::to_string(i + 1);
    const auto f = split(line, ',');
    if (f.size() != 8) {
      fail(Errc::parse_error,
           ctx + ": expected 8 fields, got " + std::to_string(f.size()));
    }
    AnomalyScore s;
    s.track_id = parse_int(f[0], ctx + " track_id");
    s.anchor_frame = parse_int(f[1], ctx + " anchor_frame");
    s.window_sec = parse_double(f[2], ctx + " window_sec");
    if (!trim(f[3]).empty()) s.ade = parse_double(f[3], ctx + " ade");
    if (!trim(f[4]).empty()) s.angle = parse_double(f[4], ctx + " angle");
    s.ade_flag = parse_int(f[5], ctx + " ade_flag") != 0;
    s.angle_flag = parse_int(f[6], ctx + " angle_flag") != 0;
    s.degenerate = parse_int(f[7], ctx + " degenerate") != 0;
    out.push_back(s);
  }
  return out;
}

inline std::vector<AnomalyScore> read_scores(const std::string& path) {
  return parse_scores(read_text_file(path), path);
}

}  // namespace trajwatch
