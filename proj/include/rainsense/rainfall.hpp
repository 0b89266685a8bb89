// Ground-truth preparation from tipping-bucket gauge logs, daily aggregation of minute
// predictions, and the detection/estimation metrics.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rainsense/common.hpp"
#include "rainsense/metrics.hpp"
#include "rainsense/model.hpp"

namespace rainsense {

inline constexpr double kTipMm = 0.22;

struct GaugeRecord {
  Timestamp t{};
  double cumulative_mm = 0;
};

/// CSV `timestamp_utc,cumulative_mm` with header. Records must be time-ordered, cumulative
/// values non-decreasing, and increments whole multiples of `tip_mm`.
inline std::vector<GaugeRecord> parse_gauge(std::istream& in, double tip_mm = kTipMm) {
  std::vector<GaugeRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() < 2) throw Error("gauge log line " + std::to_string(line_no) + ": expected 2 columns");
    if (line_no == 1 && cells[0] == "timestamp_utc") continue;
    GaugeRecord r{parse_timestamp(cells[0]), parse_number(cells[1])};
    if (!(r.cumulative_mm >= 0) || !std::isfinite(r.cumulative_mm)) {
      throw Error("gauge log line " + std::to_string(line_no) + ": cumulative rainfall must be >= 0");
    }
    if (!out.empty()) {
      if (r.t <= out.back().t) throw Error("gauge log not time-ordered at line " + std::to_string(line_no));
      double inc = r.cumulative_mm - out.back().cumulative_mm;
      if (inc < -1e-9) throw Error("gauge log not monotone at line " + std::to_string(line_no));
      double tips = inc / tip_mm;
      if (std::abs(tips - std::round(tips)) > 1e-6) {
        throw Error("gauge log line " + std::to_string(line_no) + ": increment is not a multiple of the tip size");
      }
    }
    out.push_back(r);
  }
  return out;
}

/// Tips grouped into events: consecutive increases separated by less than `min_gap`.
struct GaugeEvent {
  int id = 0;
  Timestamp first_tip{};
  Timestamp last_tip{};
  double total_mm = 0;
};

inline std::vector<GaugeEvent> detect_events(const std::vector<GaugeRecord>& records,
                                             std::chrono::minutes min_gap = std::chrono::minutes(60)) {
  std::vector<GaugeEvent> events;
  for (std::size_t i = 1; i < records.size(); ++i) {
    double inc = records[i].cumulative_mm - records[i - 1].cumulative_mm;
    if (inc <= 1e-12) continue;
    if (events.empty() || records[i].t - events.back().last_tip >= min_gap) {
      events.push_back({static_cast<int>(events.size()) + 1, records[i].t, records[i].t, 0.0});
    }
    events.back().last_tip = records[i].t;
    events.back().total_mm += inc;
  }
  return events;
}

struct BoundaryAdjustment {
  int event_id = 0;
  Timestamp adjusted_start{};
  Timestamp adjusted_end{};
};

/// JSON list of `{"event": id, "start": ts, "end": ts}`.
inline std::vector<BoundaryAdjustment> parse_adjustments(const nlohmann::json& j) {
  std::vector<BoundaryAdjustment> out;
  try {
    for (const auto& a : j) {
      BoundaryAdjustment adj{a.at("event").get<int>(), parse_timestamp(a.at("start").get<std::string>()),
                             parse_timestamp(a.at("end").get<std::string>())};
      if (!(adj.adjusted_start < adj.adjusted_end)) throw Error("adjustment start must precede end");
      out.push_back(adj);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("adjustments: ") + e.what());
  }
  return out;
}

struct RainLabel {
  Timestamp minute{};
  bool is_raining = false;
  double intensity_mm_per_min = 0;
};

namespace detail {

/// Piecewise-linear cumulative curve, constant outside the record span.
inline double cumulative_at(const std::vector<GaugeRecord>& pts, Timestamp t) {
  if (pts.empty()) return 0.0;
  if (t <= pts.front().t) return pts.front().cumulative_mm;
  if (t >= pts.back().t) return pts.back().cumulative_mm;
  auto it = std::upper_bound(pts.begin(), pts.end(), t, [](Timestamp v, const GaugeRecord& r) { return v < r.t; });
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  double f = seconds_between(lo.t, t) / seconds_between(lo.t, hi.t);
  return lo.cumulative_mm + f * (hi.cumulative_mm - lo.cumulative_mm);
}

}  // namespace detail

/// Labels for minute marks m in [window_start, window_end): intensity(m) = C(m) - C(m - 1 min),
/// where C is the cumulative curve interpolated linearly between records. A minute is raining if
/// (m - 1 min, m] overlaps an adjusted event interval, or otherwise if its intensity is positive.
///
/// An adjustment replaces the interpolation before its event's first tip with a ramp from the
/// pre-event cumulative value anchored at adjusted_start.
inline std::vector<RainLabel> minute_labels(const std::vector<GaugeRecord>& records,
                                            const std::vector<BoundaryAdjustment>& adjustments, Timestamp window_start,
                                            Timestamp window_end,
                                            std::chrono::minutes event_gap = std::chrono::minutes(60)) {
  using std::chrono::minutes;
  auto events = detect_events(records, event_gap);
  std::vector<GaugeRecord> curve = records;
  for (const auto& adj : adjustments) {
    auto ev = std::find_if(events.begin(), events.end(), [&](const GaugeEvent& e) { return e.id == adj.event_id; });
    if (ev == events.end()) throw Error("adjustment refers to unknown rain event " + std::to_string(adj.event_id));
    if (adj.adjusted_start > ev->first_tip || adj.adjusted_end < ev->last_tip) {
      throw Error("adjustment for event " + std::to_string(adj.event_id) + " excludes some of its gauge tips");
    }
    auto first = std::find_if(curve.begin(), curve.end(), [&](const GaugeRecord& r) { return r.t == ev->first_tip; });
    double before = first == curve.begin() ? first->cumulative_mm : (first - 1)->cumulative_mm;
    // drop flat records between the anchor and the first tip so the ramp starts at the anchor
    auto lo = std::lower_bound(curve.begin(), first, adj.adjusted_start,
                               [](const GaugeRecord& r, Timestamp v) { return r.t < v; });
    for (auto it = lo; it != first; ++it) {
      if (it->cumulative_mm != before) {
        throw Error("adjustment for event " + std::to_string(adj.event_id) + " reaches into an earlier event");
      }
    }
    auto pos = curve.erase(lo, first);
    if (adj.adjusted_start < pos->t) curve.insert(pos, GaugeRecord{adj.adjusted_start, before});
  }

  std::vector<RainLabel> labels;
  auto start = std::chrono::ceil<minutes>(window_start);
  for (Timestamp m = start; m < window_end; m += minutes(1)) {
    double inc = detail::cumulative_at(curve, m) - detail::cumulative_at(curve, m - minutes(1));
    inc = std::max(0.0, inc);
    bool in_event = std::any_of(adjustments.begin(), adjustments.end(), [&](const BoundaryAdjustment& a) {
      return m > a.adjusted_start && m - minutes(1) < a.adjusted_end;
    });
    labels.push_back({m, in_event || inc > 1e-12, inc});
  }
  return labels;
}

/// Gauge labels mark the end of the minute they describe; feature rows are keyed by the start of
/// their minute. This shifts marks back one minute so the two can be joined.
inline std::vector<RainLabel> keyed_by_minute_start(std::vector<RainLabel> labels) {
  for (auto& l : labels) l.minute -= std::chrono::minutes(1);
  return labels;
}

/// Label CSV: `minute_utc,is_raining,intensity_mm_per_min`.
inline void write_labels_csv(std::ostream& out, const std::vector<RainLabel>& labels) {
  out << "minute_utc,is_raining,intensity_mm_per_min\n";
  for (const auto& l : labels) {
    out << format_timestamp(l.minute) << ',' << (l.is_raining ? 1 : 0) << ',' << format_number(l.intensity_mm_per_min)
        << '\n';
  }
}

inline std::vector<RainLabel> read_labels_csv(std::istream& in) {
  std::vector<RainLabel> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() < 3) throw Error("label CSV line " + std::to_string(line_no) + ": expected 3 columns");
    if (line_no == 1 && cells[0] == "minute_utc") continue;
    RainLabel l{parse_timestamp(cells[0]), parse_number(cells[1]) != 0, parse_number(cells[2])};
    if (!l.is_raining) l.intensity_mm_per_min = 0;
    out.push_back(l);
  }
  return out;
}

/// Prediction CSV: `minute_utc,p_rain,intensity_mm_per_min`.
inline void write_predictions_csv_row(std::ostream& out, const MinutePrediction& p) {
  out << format_timestamp(p.minute) << ',' << format_number(p.p_rain) << ',' << format_number(p.intensity_mm_per_min)
      << '\n';
}

inline void write_predictions_csv(std::ostream& out, const std::vector<MinutePrediction>& preds) {
  out << "minute_utc,p_rain,intensity_mm_per_min\n";
  for (const auto& p : preds) write_predictions_csv_row(out, p);
}

inline std::vector<MinutePrediction> read_predictions_csv(std::istream& in) {
  std::vector<MinutePrediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() < 3) throw Error("prediction CSV line " + std::to_string(line_no) + ": expected 3 columns");
    if (line_no == 1 && cells[0] == "minute_utc") continue;
    out.push_back({parse_timestamp(cells[0]), parse_number(cells[1]), parse_number(cells[2])});
  }
  return out;
}

struct DailyRainfall {
  Date date{};
  double total_mm = 0;
  int raining_minutes = 0;
};

/// Local calendar date of a UTC instant under a fixed UTC offset.
inline Date local_date(Timestamp t, std::chrono::minutes utc_offset) {
  return std::chrono::floor<std::chrono::days>(t + utc_offset);
}

/// Per local date: sum of intensities over minutes with p_rain >= threshold. Every date that
/// has predictions gets a row.
inline std::vector<DailyRainfall> daily_aggregate(const std::vector<MinutePrediction>& preds, double threshold = 0.5,
                                                  std::chrono::minutes utc_offset = std::chrono::minutes(0)) {
  std::map<Date, DailyRainfall> days;
  for (const auto& p : preds) {
    auto d = local_date(p.minute, utc_offset);
    auto& row = days[d];
    row.date = d;
    if (p.p_rain >= threshold) {
      row.total_mm += p.intensity_mm_per_min;
      ++row.raining_minutes;
    }
  }
  std::vector<DailyRainfall> out;
  for (auto& [d, row] : days) out.push_back(row);
  return out;
}

inline std::vector<DailyRainfall> daily_from_labels(const std::vector<RainLabel>& labels,
                                                    std::chrono::minutes utc_offset = std::chrono::minutes(0)) {
  std::vector<MinutePrediction> as_preds;
  for (const auto& l : labels) as_preds.push_back({l.minute, l.is_raining ? 1.0 : 0.0, l.intensity_mm_per_min});
  return daily_aggregate(as_preds, 0.5, utc_offset);
}

inline void write_daily_csv(std::ostream& out, const std::vector<DailyRainfall>& days) {
  out << "date,total_mm,raining_minutes\n";
  for (const auto& d : days) out << format_date(d.date) << ',' << format_number(d.total_mm) << ',' << d.raining_minutes << '\n';
}

inline std::vector<DailyRainfall> read_daily_csv(std::istream& in) {
  std::vector<DailyRainfall> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (line_no == 1 && cells[0] == "date") continue;
    if (cells.size() < 2) throw Error("daily CSV line " + std::to_string(line_no) + ": expected date,total_mm");
    out.push_back({parse_date(cells[0]), parse_number(cells[1]),
                   cells.size() > 2 ? static_cast<int>(parse_number(cells[2])) : 0});
  }
  return out;
}

struct DetectionMetrics {
  double accuracy = 0;
  double f1 = 0;
  Confusion confusion;
};

/// Per-minute comparison over minutes present in both series.
inline DetectionMetrics detection_metrics(const std::vector<MinutePrediction>& preds,
                                          const std::vector<RainLabel>& labels, double threshold = 0.5) {
  std::map<Timestamp, bool> truth;
  for (const auto& l : labels) truth[l.minute] = l.is_raining;
  DetectionMetrics m;
  for (const auto& p : preds) {
    auto it = truth.find(p.minute);
    if (it == truth.end()) continue;
    m.confusion.add(p.p_rain >= threshold, it->second);
  }
  m.accuracy = m.confusion.accuracy();
  m.f1 = m.confusion.f1();
  return m;
}

struct EstimationMetrics {
  std::optional<double> tre;   // undefined when no true rainfall
  double made = 0;
  std::optional<double> mape;  // fraction, over days with true rainfall > 0
  std::size_t days = 0;
};

struct DayComparison {
  Date date{};
  double predicted_mm = 0;
  double true_mm = 0;
};

/// Pairs by date; a date missing on one side counts as 0 mm there.
inline std::vector<DayComparison> pair_days(const std::vector<DailyRainfall>& pred,
                                            const std::vector<DailyRainfall>& truth) {
  std::map<Date, DayComparison> m;
  for (const auto& d : pred) {
    m[d.date].date = d.date;
    m[d.date].predicted_mm += d.total_mm;
  }
  for (const auto& d : truth) {
    m[d.date].date = d.date;
    m[d.date].true_mm += d.total_mm;
  }
  std::vector<DayComparison> out;
  for (auto& [d, c] : m) out.push_back(c);
  return out;
}

/// TRE = |sum pred - sum true| / sum true; MADE = sum |pred - true| / N;
/// MAPE = mean of |pred - true| / true over days with true > 0.
inline EstimationMetrics estimation_metrics(const std::vector<DailyRainfall>& pred,
                                            const std::vector<DailyRainfall>& truth) {
  auto days = pair_days(pred, truth);
  EstimationMetrics m;
  m.days = days.size();
  if (days.empty()) return m;
  double sp = 0, st = 0, abs_sum = 0, pct_sum = 0;
  std::size_t rainy = 0;
  for (const auto& d : days) {
    sp += d.predicted_mm;
    st += d.true_mm;
    abs_sum += std::abs(d.predicted_mm - d.true_mm);
    if (d.true_mm > 0) {
      pct_sum += std::abs(d.predicted_mm - d.true_mm) / d.true_mm;
      ++rainy;
    }
  }
  if (st > 0) m.tre = std::abs(sp - st) / st;
  m.made = abs_sum / static_cast<double>(days.size());
  if (rainy > 0) m.mape = pct_sum / static_cast<double>(rainy);
  return m;
}

struct EvalReport {
  DetectionMetrics detection;
  EstimationMetrics estimation;
  std::vector<DayComparison> days;
};

inline EvalReport evaluate(const std::vector<MinutePrediction>& preds, const std::vector<RainLabel>& labels,
                           double threshold = 0.5, std::chrono::minutes utc_offset = std::chrono::minutes(0)) {
  EvalReport r;
  r.detection = detection_metrics(preds, labels, threshold);
  auto pd = daily_aggregate(preds, threshold, utc_offset);
  auto td = daily_from_labels(labels, utc_offset);
  r.estimation = estimation_metrics(pd, td);
  r.days = pair_days(pd, td);
  return r;
}

inline void write_report_csv(std::ostream& out, const EvalReport& r) {
  out << "date,predicted_mm,true_mm,abs_error_mm\n";
  for (const auto& d : r.days) {
    out << format_date(d.date) << ',' << format_number(d.predicted_mm) << ',' << format_number(d.true_mm) << ','
        << format_number(std::abs(d.predicted_mm - d.true_mm)) << '\n';
  }
}

inline void write_report_summary(std::ostream& out, const EvalReport& r) {
  auto opt = [](const std::optional<double>& v, double scale = 1.0) {
    return v ? format_number(*v * scale) : std::string("n/a");
  };
  out << "accuracy " << format_number(r.detection.accuracy) << '\n'
      << "f1 " << format_number(r.detection.f1) << '\n'
      << "tre " << opt(r.estimation.tre) << '\n'
      << "made_mm " << format_number(r.estimation.made) << '\n'
      << "mape_percent " << opt(r.estimation.mape, 100.0) << '\n'
      << "days " << r.estimation.days << '\n';
}

template <typename T>
struct Split {
  std::vector<T> train, val, test;
  std::vector<std::string> warnings;
};

/// Contiguous chronological segments; the input must already be in time order.
template <typename T>
Split<T> sequential_split(const std::vector<T>& items, double f_train = 0.6, double f_val = 0.2,
                          double f_test = 0.2) {
  if (f_train < 0 || f_val < 0 || f_test < 0 || std::abs(f_train + f_val + f_test - 1.0) > 1e-9) {
    throw Error("split fractions must be non-negative and sum to 1");
  }
  const auto n = items.size();
  auto n_train = static_cast<std::size_t>(std::llround(f_train * n));
  auto n_trval = std::min(n, static_cast<std::size_t>(std::llround((f_train + f_val) * n)));
  Split<T> s;
  s.train.assign(items.begin(), items.begin() + n_train);
  s.val.assign(items.begin() + n_train, items.begin() + n_trval);
  s.test.assign(items.begin() + n_trval, items.end());
  if (s.val.empty()) s.warnings.push_back("validation split is empty");
  if (s.test.empty()) s.warnings.push_back("test split is empty");
  return s;
}

}  // namespace rainsense
