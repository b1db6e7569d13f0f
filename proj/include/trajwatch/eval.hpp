#pragma once

// Offline evaluation: ROC curves under the strict-greater flagging rule,
// trapezoidal AUC, equal-error rate by interpolation along the curve, and
// the window sweep that produces one report per (window, method).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "trajwatch/common.hpp"
#include "trajwatch/types.hpp"

namespace trajwatch {

struct LabeledScore {
  double value = 0.0;
  int label = 0;  // 0 negative, 1 positive
};

// One operating point: at threshold t a sample is flagged when score > t.
struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

enum class Method { ade, angle };

inline const char* to_string(Method m) {
  return m == Method::ade ? "ade" : "angle";
}

inline Method parse_method(std::string_view s) {
  if (s == "ade") return Method::ade;
  if (s == "angle") return Method::angle;
  fail(Errc::parse_error, "unknown method '" + std::string(s) + "'");
}

enum class Aggregate { max, mean };

inline const char* to_string(Aggregate a) {
  return a == Aggregate::max ? "max" : "mean";
}

inline Aggregate parse_aggregate(std::string_view s) {
  if (s == "max") return Aggregate::max;
  if (s == "mean") return Aggregate::mean;
  fail(Errc::parse_error, "unknown aggregate '" + std::string(s) + "'");
}

struct EvalReport {
  double window_sec = 0.0;
  Method method = Method::ade;
  std::vector<RocPoint> roc;
  double auc = 0.0;
  double eer = 0.0;
  std::int64_t n_pos = 0;
  std::int64_t n_neg = 0;
};

// ROC under the strict rule flagged := score > threshold. Thresholds are
// +infinity, each distinct score descending, then -infinity, so the curve
// starts at (0, 0) and ends at (1, 1). Tied scores advance together: the
// point AT threshold v counts only scores strictly above v.
inline std::vector<RocPoint> roc_curve(std::span<const LabeledScore> scores) {
  std::int64_t n_pos = 0;
  std::int64_t n_neg = 0;
  for (const auto& s : scores) (s.label ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0) {
    fail(Errc::single_class_corpus,
         "ROC needs both classes, got " + std::to_string(n_pos) +
             " positive and " + std::to_string(n_neg) + " negative");
  }
  std::vector<LabeledScore> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledScore& a, const LabeledScore& b) {
              return a.value > b.value;
            });
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<RocPoint> out;
  out.push_back({inf, 0.0, 0.0});
  std::int64_t cum_pos = 0;
  std::int64_t cum_neg = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double value = sorted[i].value;
    // Operating point at threshold `value`: only strictly greater scores are
    // flagged, i.e. everything accumulated before this tie group.
    out.push_back({value,
                   static_cast<double>(cum_neg) / static_cast<double>(n_neg),
                   static_cast<double>(cum_pos) / static_cast<double>(n_pos)});
    while (i < sorted.size() && sorted[i].value == value) {
      (sorted[i].label ? cum_pos : cum_neg) += 1;
      ++i;
    }
  }
  out.push_back({-inf, 1.0, 1.0});
  return out;
}

// Area under the ROC curve by the trapezoid rule. With the curve built
// above this equals the Mann-Whitney statistic: the probability a random
// positive outscores a random negative, ties counted half.
inline double auc(std::span<const LabeledScore> scores) {
  const auto curve = roc_curve(scores);
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) *
            (curve[i].tpr + curve[i - 1].tpr) * 0.5;
  }
  return area;
}

// Equal-error rate: the false-positive rate where FPR equals the false-
// negative rate (1 - TPR) along the ROC polyline. g = fpr + tpr - 1 is
// monotone nondecreasing along the curve, from -1 at (0,0) to +1 at (1,1);
// the EER sits where g crosses zero. An exact hit returns that point's FPR,
// otherwise the crossing is linearly interpolated between the bracketing
// points.
inline double eer(std::span<const LabeledScore> scores) {
  const auto curve = roc_curve(scores);
  auto g = [](const RocPoint& p) { return p.fpr + p.tpr - 1.0; };
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double gi = g(curve[i]);
    if (gi < 0.0) continue;
    if (gi == 0.0) return curve[i].fpr;
    // First strictly positive g; i > 0 because g at (0,0) is -1.
    const RocPoint& lo = curve[i - 1];
    const RocPoint& hi = curve[i];
    const double g_lo = g(lo);
    const double lambda = -g_lo / (gi - g_lo);
    return lo.fpr + lambda * (hi.fpr - lo.fpr);
  }
  // Unreachable: g at the final point (1,1) is +1.
  fail(Errc::invalid_argument, "ROC curve has no equal-error crossing");
}

// Reduces a track's per-anchor scores to one value for track-level ROC.
inline double aggregate_scores(std::span<const double> values, Aggregate agg) {
  if (values.empty()) {
    fail(Errc::invalid_argument, "cannot aggregate zero scores");
  }
  if (agg == Aggregate::max) {
    double best = values[0];
    for (const double v : values) best = std::max(best, v);
    return best;
  }
  double sum = 0.0;
  for (const double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

// Sweeps detection windows and methods over scored rows. Rows are grouped by
// track and aggregated (max by default: one bad moment marks the track), the
// aggregate is paired with the track's ground-truth label, and ROC/AUC/EER
// are computed per (window, method). Tracks absent from `labels` and rows
// lacking the method's score are ignored.
inline std::vector<EvalReport> window_sweep(
    std::span<const AnomalyScore> rows,
    const std::map<std::int64_t, int>& labels,
    std::span<const double> windows_sec, std::span<const Method> methods,
    Aggregate agg = Aggregate::max) {
  std::vector<EvalReport> reports;
  for (const double window_sec : windows_sec) {
    for (const Method method : methods) {
      std::map<std::int64_t, std::vector<double>> per_track;
      for (const auto& row : rows) {
        if (row.window_sec != window_sec) continue;
        const auto& value = method == Method::ade ? row.ade : row.angle;
        if (!value) continue;
        if (labels.find(row.track_id) == labels.end()) continue;
        per_track[row.track_id].push_back(*value);
      }
      std::vector<LabeledScore> samples;
      samples.reserve(per_track.size());
      for (const auto& [track_id, values] : per_track) {
        samples.push_back(
            {aggregate_scores(values, agg), labels.at(track_id)});
      }
      EvalReport report;
      report.window_sec = window_sec;
      report.method = method;
      report.roc = roc_curve(samples);
      report.auc = auc(samples);
      report.eer = eer(samples);
      for (const auto& s : samples) (s.label ? report.n_pos : report.n_neg) += 1;
      reports.push_back(std::move(report));
    }
  }
  return reports;
}

// Default detection-window grid, in seconds.
inline std::vector<double> default_windows() {
  return {0.2, 0.4, 0.6, 0.8, 1.0, 2.0, 3.0, 4.0, 5.0};
}

inline constexpr std::string_view kReportCsvHeader =
    "window_sec,method,auc,eer,n_pos,n_neg";

inline std::string format_reports(std::span<const EvalReport> reports) {
  std::ostringstream out;
  out << kReportCsvHeader << '\n';
  for (const auto& r : reports) {
    out << format_double(r.window_sec) << ',' << to_string(r.method) << ','
        << format_double(r.auc) << ',' << format_double(r.eer) << ','
        << r.n_pos << ',' << r.n_neg << '\n';
  }
  return out.str();
}

inline std::string format_roc(std::span<const RocPoint> curve) {
  std::ostringstream out;
  out << "threshold,fpr,tpr\n";
  for (const auto& p : curve) {
    out << format_double(p.threshold) << ',' << format_double(p.fpr) << ','
        << format_double(p.tpr) << '\n';
  }
  return out.str();
}

}  // namespace trajwatch
