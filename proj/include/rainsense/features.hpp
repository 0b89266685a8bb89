// Reflection-based visual features per RoI, timbral audio features per second, and the
// per-minute averages that form one model input row.
#pragma once

#include <fftw3.h>

#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rainsense/autoroi.hpp"
#include "rainsense/motion.hpp"

namespace rainsense {

inline constexpr double kHighChangeThreshold = 3.0 / 255.0;
inline constexpr double kBrightThreshold = 0.1;
inline constexpr double kRolloffFraction = 0.85;
inline constexpr int kFeatureSchemaVersion = 1;
inline constexpr int kVisualPerRoi = 4;
inline constexpr int kAudioFeatureCount = 5;

struct FeatureThresholds {
  double high = kHighChangeThreshold;   // brightness: dI > high
  double bright = kBrightThreshold;     // density: dI > bright
};

namespace detail {

template <typename F>
void for_each_in_roi(const DeltaMap& map, const RoI& roi, F&& f) {
  if (roi.x_lo < 0 || roi.y_lo < 0 || roi.x_hi > map.width || roi.y_hi > map.height || roi.x_lo >= roi.x_hi ||
      roi.y_lo >= roi.y_hi) {
    throw Error("RoI " + std::to_string(roi.id) + " outside the intensity-change map");
  }
  for (int y = roi.y_lo; y < roi.y_hi; ++y) {
    const double* row = map.values.data() + static_cast<std::size_t>(y) * map.width;
    for (int x = roi.x_lo; x < roi.x_hi; ++x) f(row[x]);
  }
}

inline double fraction_above(const DeltaMap& map, const RoI& roi, double tau) {
  std::size_t hits = 0;
  for_each_in_roi(map, roi, [&](double v) { hits += v > tau; });
  return static_cast<double>(hits) / roi.area();
}

}  // namespace detail

inline double max_delta(const DeltaMap& map, const RoI& roi) {
  double m = 0.0;
  detail::for_each_in_roi(map, roi, [&](double v) { m = std::max(m, v); });
  return m;
}

/// Fraction of RoI pixels with dI strictly above `tau_high`.
inline double brightness(const DeltaMap& map, const RoI& roi, double tau_high = kHighChangeThreshold) {
  return detail::fraction_above(map, roi, tau_high);
}

/// Fraction of RoI pixels with dI strictly above `tau_bright`.
inline double density(const DeltaMap& map, const RoI& roi, double tau_bright = kBrightThreshold) {
  return detail::fraction_above(map, roi, tau_bright);
}

/// 8-bit level of a normalized intensity change; the epsilon absorbs k/255 round-off.
inline int gray_level(double v) { return static_cast<int>(std::floor(v * 255.0 + 1e-9)); }

/// Number of distinct integer change levels floor(dI * 255) in the RoI.
inline int variability(const DeltaMap& map, const RoI& roi) {
  std::array<bool, 257> seen{};
  int count = 0;
  detail::for_each_in_roi(map, roi, [&](double v) {
    int level = std::clamp(gray_level(v), 0, 256);
    if (!seen[level]) {
      seen[level] = true;
      ++count;
    }
  });
  return count;
}

/// Layout: (max_dI, brightness, density, variability) per RoI in id order.
struct VisualFeatures {
  std::vector<double> values;
};

inline VisualFeatures visual_vector(const DeltaMap& map, const RoISet& rois, const FeatureThresholds& th = {}) {
  VisualFeatures f;
  f.values.reserve(rois.rois.size() * kVisualPerRoi);
  for (const auto& roi : rois.rois) {
    f.values.push_back(max_delta(map, roi));
    f.values.push_back(brightness(map, roi, th.high));
    f.values.push_back(density(map, roi, th.bright));
    f.values.push_back(variability(map, roi));
  }
  return f;
}

inline VisualFeatures visual_vector(const FramePair& pair, const RoISet& rois, const FeatureThresholds& th = {}) {
  return visual_vector(delta_map(pair), rois, th);
}

struct AudioFeatures {
  double ae = 0;    // peak |x|
  double rmse = 0;  // sqrt(mean x^2)
  double zcr = 0;   // sign changes per sample step
  double sc = 0;    // spectral centroid, Hz
  double sr = 0;    // spectral rolloff, Hz

  std::array<double, kAudioFeatureCount> as_array() const { return {ae, rmse, zcr, sc, sr}; }
};

/// Magnitude spectrum |X_k|, k = 0..N/2, of a real signal. FFTW plans are cached per thread and size.
class MagnitudeSpectrum {
 public:
  static std::vector<double> compute(const std::vector<double>& x) {
    thread_local std::map<std::size_t, std::unique_ptr<MagnitudeSpectrum>> cache;
    auto& slot = cache[x.size()];
    if (!slot) slot.reset(new MagnitudeSpectrum(x.size()));
    return slot->run(x);
  }

  MagnitudeSpectrum(const MagnitudeSpectrum&) = delete;
  MagnitudeSpectrum& operator=(const MagnitudeSpectrum&) = delete;
  ~MagnitudeSpectrum() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }

 private:
  explicit MagnitudeSpectrum(std::size_t n) : n_(n) {
    std::lock_guard lock(planner_mutex());
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }

  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  std::vector<double> run(const std::vector<double>& x) {
    std::copy(x.begin(), x.end(), in_);
    fftw_execute(plan_);
    std::vector<double> mag(n_ / 2 + 1);
    for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::hypot(out_[k][0], out_[k][1]);
    return mag;
  }

  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

/// ZCR counts transitions between the x >= 0 and x < 0 classes. Spectral features use the
/// magnitude spectrum of the whole window; silence yields SC = SR = 0.
inline AudioFeatures audio_features(const AudioWindow& w) {
  const auto& x = w.samples;
  if (w.sample_rate <= 0 || static_cast<int>(x.size()) != w.sample_rate) {
    throw Error("audio window must hold exactly one second of samples");
  }
  AudioFeatures f;
  double energy = 0;
  std::size_t crossings = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    f.ae = std::max(f.ae, std::abs(x[i]));
    energy += x[i] * x[i];
    if (i > 0 && ((x[i] >= 0) != (x[i - 1] >= 0))) ++crossings;
  }
  f.rmse = std::sqrt(energy / static_cast<double>(x.size()));
  f.zcr = x.size() > 1 ? static_cast<double>(crossings) / static_cast<double>(x.size() - 1) : 0.0;
  if (f.ae == 0.0) return f;

  auto mag = MagnitudeSpectrum::compute(x);
  double bin_hz = static_cast<double>(w.sample_rate) / static_cast<double>(x.size());
  double sum_mag = 0, sum_fmag = 0, sum_pow = 0;
  for (std::size_t k = 0; k < mag.size(); ++k) {
    sum_mag += mag[k];
    sum_fmag += k * bin_hz * mag[k];
    sum_pow += mag[k] * mag[k];
  }
  if (sum_mag > 0) f.sc = sum_fmag / sum_mag;
  double target = kRolloffFraction * sum_pow, acc = 0;
  for (std::size_t k = 0; k < mag.size(); ++k) {
    acc += mag[k] * mag[k];
    if (acc >= target) {
      f.sr = k * bin_hz;
      break;
    }
  }
  return f;
}

struct MinuteFeature {
  Timestamp minute{};
  std::vector<double> visual;
  std::array<double, kAudioFeatureCount> audio{};
  bool complete = false;
  std::size_t visual_count = 0;
  std::size_t audio_count = 0;

  std::vector<double> row() const {
    std::vector<double> r(visual);
    r.insert(r.end(), audio.begin(), audio.end());
    return r;
  }
};

/// Elementwise means over the minute's samples; std::nullopt (minute skipped) without visuals.
/// An empty audio list leaves the audio slots at zero and marks the minute incomplete.
inline std::optional<MinuteFeature> minute_aggregate(const std::vector<VisualFeatures>& visuals,
                                                     const std::vector<AudioFeatures>& audios, Timestamp minute,
                                                     std::size_t expected_pairs = 12,
                                                     std::size_t expected_windows = 60) {
  if (visuals.empty()) return std::nullopt;
  MinuteFeature m;
  m.minute = truncate_minute(minute);
  m.visual.assign(visuals.front().values.size(), 0.0);
  for (const auto& v : visuals) {
    if (v.values.size() != m.visual.size()) throw Error("minute_aggregate: inconsistent visual vector length");
    for (std::size_t i = 0; i < v.values.size(); ++i) m.visual[i] += v.values[i];
  }
  for (auto& v : m.visual) v /= static_cast<double>(visuals.size());
  for (const auto& a : audios) {
    auto arr = a.as_array();
    for (int i = 0; i < kAudioFeatureCount; ++i) m.audio[i] += arr[i];
  }
  if (!audios.empty()) {
    for (auto& v : m.audio) v /= static_cast<double>(audios.size());
  }
  m.visual_count = visuals.size();
  m.audio_count = audios.size();
  m.complete = visuals.size() == expected_pairs && audios.size() == expected_windows;
  return m;
}

inline std::vector<std::string> feature_names(int roi_count) {
  static const char* visual[] = {"maxdI", "brightness", "density", "variability"};
  std::vector<std::string> names;
  for (int r = 1; r <= roi_count; ++r) {
    for (const char* v : visual) names.push_back("roi" + std::to_string(r) + "_" + v);
  }
  for (const char* a : {"audio_ae", "audio_rmse", "audio_zcr", "audio_sc", "audio_sr"}) names.emplace_back(a);
  return names;
}

/// One CSV row: a minute's features plus optional labels.
struct FeatureRow {
  Timestamp minute{};
  std::vector<double> x;
  bool complete = false;
  std::optional<bool> is_raining;
  std::optional<double> intensity_mm_per_min;
};

struct FeatureTable {
  int roi_count = 0;
  std::vector<FeatureRow> rows;
};

/// Header: `minute_utc,<feature names>,complete[,is_raining,intensity_mm_per_min]`.
inline void write_feature_csv(std::ostream& out, const FeatureTable& table) {
  bool labeled = !table.rows.empty() && table.rows.front().is_raining.has_value();
  out << "minute_utc";
  for (const auto& n : feature_names(table.roi_count)) out << ',' << n;
  out << ",complete";
  if (labeled) out << ",is_raining,intensity_mm_per_min";
  out << '\n';
  for (const auto& r : table.rows) {
    out << format_timestamp(r.minute);
    for (double v : r.x) out << ',' << format_number(v);
    out << ',' << (r.complete ? 1 : 0);
    if (labeled) {
      out << ',' << (r.is_raining.value_or(false) ? 1 : 0) << ',' << format_number(r.intensity_mm_per_min.value_or(0));
    }
    out << '\n';
  }
}

inline FeatureTable read_feature_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("feature CSV is empty");
  auto header = split_csv_line(line);
  if (header.empty() || header.front() != "minute_utc") throw Error("feature CSV: first column must be minute_utc");
  auto it = std::find(header.begin(), header.end(), "complete");
  if (it == header.end()) throw Error("feature CSV: missing 'complete' column");
  auto n_features = static_cast<std::size_t>(it - header.begin()) - 1;
  if (n_features < kAudioFeatureCount || (n_features - kAudioFeatureCount) % kVisualPerRoi != 0) {
    throw Error("feature CSV: unexpected feature column count");
  }
  FeatureTable table;
  table.roi_count = static_cast<int>((n_features - kAudioFeatureCount) / kVisualPerRoi);
  auto expected = feature_names(table.roi_count);
  if (!std::equal(expected.begin(), expected.end(), header.begin() + 1)) {
    throw Error("feature CSV: header does not match feature schema " + std::to_string(kFeatureSchemaVersion));
  }
  bool labeled = header.size() >= n_features + 4 && header[n_features + 2] == "is_raining";
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw Error("feature CSV line " + std::to_string(line_no) + ": wrong cell count");
    FeatureRow r;
    r.minute = parse_timestamp(cells[0]);
    for (std::size_t i = 0; i < n_features; ++i) r.x.push_back(parse_number(cells[1 + i]));
    r.complete = parse_number(cells[n_features + 1]) != 0;
    if (labeled) {
      r.is_raining = parse_number(cells[n_features + 2]) != 0;
      r.intensity_mm_per_min = parse_number(cells[n_features + 3]);
    }
    table.rows.push_back(std::move(r));
  }
  return table;
}

}  // namespace rainsense
