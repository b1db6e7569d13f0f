#pragma once

// Pipeline configuration: the knobs every stage shares, validation of the
// cross-field that must hold before any math runs, and a plain
// "key = value" file format for persisting them.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "trajwatch/common.hpp"

namespace trajwatch {

struct PipelineConfig {
  double sample_rate_hz = 5.0;
  double t_in_sec = 3.0;    // observation window fed to the predictor
  double t_pred_sec = 5.0;  // prediction horizon
  int prediction_stride = 5;  // samples between consecutive anchors per track
  std::set<int> class_whitelist = {2, 5, 7};  // car, bus, truck
  Vec2 flow_axis = {0.0, 1.0};  // unit vector of expected travel direction
  int min_presence_frames = 15;
  int max_gap_frames = 5;
  // Flag thresholds are deliberately optional: scoring never needs them,
  // flagging refuses to guess them.
  std::optional<double> ade_threshold;    // pixels
  std::optional<double> angle_threshold;  // radians
  double degenerate_eps = 1e-6;  // chord norms below this count as degenerate

  int t_in_samples() const {
    return static_cast<int>(std::llround(t_in_sec * sample_rate_hz));
  }
  int horizon_samples() const {
    return static_cast<int>(std::llround(t_pred_sec * sample_rate_hz));
  }
  // Samples covered by a detection window (round to nearest).
  int window_samples(double window_sec) const {
    return static_cast<int>(std::llround(window_sec * sample_rate_hz));
  }

  friend bool operator==(const PipelineConfig& a, const PipelineConfig& b) {
    return a.sample_rate_hz == b.sample_rate_hz && a.t_in_sec == b.t_in_sec &&
           a.t_pred_sec == b.t_pred_sec &&
           a.prediction_stride == b.prediction_stride &&
           a.class_whitelist == b.class_whitelist && a.flow_axis == b.flow_axis &&
           a.min_presence_frames == b.min_presence_frames &&
           a.max_gap_frames == b.max_gap_frames &&
           a.ade_threshold == b.ade_threshold &&
           a.angle_threshold == b.angle_threshold &&
           a.degenerate_eps == b.degenerate_eps;
  }
};

enum class ConfigErrc {
  zero_sample_rate,
  non_integer_horizon,
  non_unit_flow_axis,
};

inline const char* to_string(ConfigErrc code) {
  switch (code) {
    case ConfigErrc::zero_sample_rate: return "zero_sample_rate";
    case ConfigErrc::non_integer_horizon: return "non_integer_horizon";
    case ConfigErrc::non_unit_flow_axis: return "non_unit_flow_axis";
  }
  return "unknown";
}

struct ConfigViolation {
  ConfigErrc kind;
  std::string message;
};

namespace detail {

// True when sec * rate lands on a positive integer (to 1e-9).
inline bool positive_integer_samples(double sec, double rate) {
  const double x = sec * rate;
  const auto n = std::llround(x);
  return n >= 1 && std::abs(x - static_cast<double>(n)) <= 1e-9;
}

}  // namespace detail

// Collects every violated constraint; an empty result means the config is
// usable by all downstream stages.
inline std::vector<ConfigViolation> validate_config(const PipelineConfig& cfg) {
  std::vector<ConfigViolation> out;
  if (!(cfg.sample_rate_hz > 0.0) || !std::isfinite(cfg.sample_rate_hz)) {
    out.push_back({ConfigErrc::zero_sample_rate,
                   "sample_rate_hz must be a positive finite number, got " +
                       format_double(cfg.sample_rate_hz)});
  } else {
    if (!detail::positive_integer_samples(cfg.t_in_sec, cfg.sample_rate_hz)) {
      out.push_back({ConfigErrc::non_integer_horizon,
                     "t_in_sec * sample_rate_hz must be a positive integer, got " +
                         format_double(cfg.t_in_sec * cfg.sample_rate_hz)});
    }
    if (!detail::positive_integer_samples(cfg.t_pred_sec, cfg.sample_rate_hz)) {
      out.push_back(
          {ConfigErrc::non_integer_horizon,
           "t_pred_sec * sample_rate_hz must be a positive integer, got " +
               format_double(cfg.t_pred_sec * cfg.sample_rate_hz)});
    }
  }
  if (std::abs(cfg.flow_axis.norm() - 1.0) > 1e-9) {
    out.push_back({ConfigErrc::non_unit_flow_axis,
                   "flow_axis must have unit norm, got norm " +
                       format_double(cfg.flow_axis.norm())});
  }
  return out;
}

// Throws invalid_config listing every violation; returns cfg for chaining.
inline const PipelineConfig& ensure_valid(const PipelineConfig& cfg) {
  const auto violations = validate_config(cfg);
  if (!violations.empty()) {
    std::string msg;
    for (const auto& v : violations) {
      if (!msg.empty()) msg += "; ";
      msg += std::string(to_string(v.kind)) + ": " + v.message;
    }
    fail(Errc::invalid_config, msg);
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// key = value (de)serialization
// ---------------------------------------------------------------------------

namespace detail {

inline Vec2 parse_vec2(std::string_view value, const std::string& context) {
  const auto parts = split(value, ',');
  if (parts.size() != 2) {
    fail(Errc::parse_error, context + ": expected 'x,y', got '" +
                                std::string(value) + "'");
  }
  return {parse_double(parts[0], context), parse_double(parts[1], context)};
}

inline std::set<int> parse_int_set(std::string_view value,
                                   const std::string& context) {
  std::set<int> out;
  if (trim(value).empty()) return out;
  for (const auto part : split(value, ',')) {
    out.insert(static_cast<int>(parse_int(part, context)));
  }
  return out;
}

}  // namespace detail

// Applies one key=value pair; unknown keys are parse errors so typos cannot
// silently fall back to defaults.
inline void set_config_key(PipelineConfig& cfg, const std::string& key,
                           const std::string& value,
                           const std::string& context = "config") {
  const std::string ctx = context + " key '" + key + "'";
  if (key == "sample_rate_hz") {
    cfg.sample_rate_hz = parse_double(value, ctx);
  } else if (key == "t_in_sec") {
    cfg.t_in_sec = parse_double(value, ctx);
  } else if (key == "t_pred_sec") {
    cfg.t_pred_sec = parse_double(value, ctx);
  } else if (key == "prediction_stride") {
    cfg.prediction_stride = static_cast<int>(parse_int(value, ctx));
  } else if (key == "class_whitelist") {
    cfg.class_whitelist = detail::parse_int_set(value, ctx);
  } else if (key == "flow_axis") {
    cfg.flow_axis = detail::parse_vec2(value, ctx);
  } else if (key == "min_presence_frames") {
    cfg.min_presence_frames = static_cast<int>(parse_int(value, ctx));
  } else if (key == "max_gap_frames") {
    cfg.max_gap_frames = static_cast<int>(parse_int(value, ctx));
  } else if (key == "ade_threshold") {
    cfg.ade_threshold = parse_double(value, ctx);
  } else if (key == "angle_threshold") {
    cfg.angle_threshold = parse_double(value, ctx);
  } else if (key == "degenerate_eps") {
    cfg.degenerate_eps = parse_double(value, ctx);
  } else {
    fail(Errc::parse_error, context + ": unknown key '" + key + "'");
  }
}

inline PipelineConfig parse_config(std::string_view text,
                                   const std::string& source = "config") {
  PipelineConfig cfg;
  for (const auto& kv : parse_key_values(text, source)) {
    set_config_key(cfg, kv.key, kv.value,
                   source + ":" + std::to_string(kv.line));
  }
  return cfg;
}

inline std::string format_config(const PipelineConfig& cfg) {
  std::ostringstream out;
  out << "sample_rate_hz = " << format_double(cfg.sample_rate_hz) << '\n';
  out << "t_in_sec = " << format_double(cfg.t_in_sec) << '\n';
  out << "t_pred_sec = " << format_double(cfg.t_pred_sec) << '\n';
  out << "prediction_stride = " << cfg.prediction_stride << '\n';
  out << "class_whitelist = ";
  bool first = true;
  for (const int c : cfg.class_whitelist) {
    if (!first) out << ',';
    out << c;
    first = false;
  }
  out << '\n';
  out << "flow_axis = " << format_double(cfg.flow_axis.x) << ','
      << format_double(cfg.flow_axis.y) << '\n';
  out << "min_presence_frames = " << cfg.min_presence_frames << '\n';
  out << "max_gap_frames = " << cfg.max_gap_frames << '\n';
  if (cfg.ade_threshold) {
    out << "ade_threshold = " << format_double(*cfg.ade_threshold) << '\n';
  }
  if (cfg.angle_threshold) {
    out << "angle_threshold = " << format_double(*cfg.angle_threshold) << '\n';
  }
  out << "degenerate_eps = " << format_double(cfg.degenerate_eps) << '\n';
  return out.str();
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(Errc::io_error, "read failed on '" + path + "'");
  return buf.str();
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_error, "cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) fail(Errc::io_error, "write failed on '" + path + "'");
}

inline PipelineConfig load_config(const std::string& path) {
  return parse_config(read_text_file(path), path);
}

inline void save_config(const PipelineConfig& cfg, const std::string& path) {
  write_text_file(path, format_config(cfg));
}

}  // namespace trajwatch
