// Synthetic camera scenes with known rainfall: frames whose reflection regions light up with
// rain intensity, audio with an intensity-proportional impulse train, and exact labels.
//
// Every frame and every audio second is rendered from its own seeded generator, so any frame
// or window can be produced independently and repeat runs are bit-identical.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "rainsense/autoroi.hpp"
#include "rainsense/ingest.hpp"
#include "rainsense/rainfall.hpp"
#include "rainsense/wav.hpp"

namespace rainsense {

struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive-exclusive

  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  RoI as_roi(int id = 0) const { return RoI{id, x0, y0, x1, y1}; }
};

/// A bright disk moving linearly between two points over [t_start_s, t_end_s] (scene seconds).
struct DistractorTrack {
  double t_start_s = 0, t_end_s = 0;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double radius = 3;
  double brightness = 0.5;
};

struct LightSegment {
  double start_s = 0, end_s = 0;
  bool night = true;
};

struct SceneSpec {
  int width = 64;
  int height = 48;
  double frame_rate = 1.0;
  double duration = 600.0;  // seconds
  Timestamp start_time{};
  std::vector<Rect> reflection_regions;
  std::vector<DistractorTrack> distractors;
  std::vector<LightSegment> light_schedule;  // outside every segment it is day
  double night_factor = 0.5;                 // scales background luminance and reflection contrast
  int audio_sample_rate = 8000;
  bool audio = true;
  double wetup_delay_s = 120.0;
  double noise_sigma = 0.8 / 255.0;
  double splash_band = 0.25;    // bottom fraction of each region receiving splashes
  double impulses_per_mm = 400; // audio impulses per second per mm/min
  std::uint64_t seed = 1;

  void validate() const {
    if (width < 2 || height < 2) throw Error("scene: frame too small");
    if (!(frame_rate > 0) || !(duration > 0)) throw Error("scene: frame_rate and duration must be positive");
    if (audio && audio_sample_rate < 100) throw Error("scene: audio sample rate too low");
    for (const auto& r : reflection_regions) {
      if (!(0 <= r.x0 && r.x0 < r.x1 && r.x1 <= width && 0 <= r.y0 && r.y0 < r.y1 && r.y1 <= height)) {
        throw Error("scene: reflection region outside the frame");
      }
    }
    if (!(night_factor > 0 && night_factor <= 1)) throw Error("scene: night_factor must lie in (0,1]");
  }
};

struct RainProfile {
  std::vector<double> intensity_mm_per_min;  // minute i starts at scene start + i min

  double at_minute(std::size_t i) const { return i < intensity_mm_per_min.size() ? intensity_mm_per_min[i] : 0.0; }

  void validate() const {
    for (double v : intensity_mm_per_min) {
      if (!std::isfinite(v) || v < 0) throw Error("rain profile intensities must be finite and >= 0");
    }
  }
};

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec s;
  try {
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.frame_rate = j.value("frame_rate", s.frame_rate);
    s.duration = j.at("duration").get<double>();
    s.start_time = parse_timestamp(j.at("start_time").get<std::string>());
    for (const auto& r : j.value("reflection_regions", nlohmann::json::array())) {
      s.reflection_regions.push_back({r.at("x0").get<int>(), r.at("y0").get<int>(), r.at("x1").get<int>(), r.at("y1").get<int>()});
    }
    for (const auto& d : j.value("distractors", nlohmann::json::array())) {
      s.distractors.push_back({d.at("t_start_s").get<double>(), d.at("t_end_s").get<double>(), d.at("x0").get<double>(),
                               d.at("y0").get<double>(), d.at("x1").get<double>(), d.at("y1").get<double>(),
                               d.value("radius", 3.0), d.value("brightness", 0.5)});
    }
    for (const auto& l : j.value("light_schedule", nlohmann::json::array())) {
      s.light_schedule.push_back({l.at("start_s").get<double>(), l.at("end_s").get<double>(),
                                  l.value("light_class", std::string("night")) == "night"});
    }
    s.night_factor = j.value("night_factor", s.night_factor);
    s.audio_sample_rate = j.value("audio_sample_rate", s.audio_sample_rate);
    s.audio = j.value("audio", s.audio);
    s.wetup_delay_s = j.value("wetup_delay_s", s.wetup_delay_s);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("scene spec: ") + e.what());
  }
  s.validate();
  return s;
}

/// Either `{"intensity_mm_per_min": [...]}` or `{"minutes": n, "events": [{"start_minute", "minutes", "intensity"}]}`.
inline RainProfile profile_from_json(const nlohmann::json& j) {
  RainProfile p;
  try {
    if (j.contains("intensity_mm_per_min")) {
      p.intensity_mm_per_min = j["intensity_mm_per_min"].get<std::vector<double>>();
    } else {
      p.intensity_mm_per_min.assign(j.at("minutes").get<std::size_t>(), 0.0);
      for (const auto& e : j.value("events", nlohmann::json::array())) {
        auto start = e.at("start_minute").get<std::size_t>();
        auto len = e.at("minutes").get<std::size_t>();
        for (std::size_t i = start; i < std::min(start + len, p.intensity_mm_per_min.size()); ++i) {
          p.intensity_mm_per_min[i] = e.at("intensity").get<double>();
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("rain profile: ") + e.what());
  }
  p.validate();
  return p;
}

/// Fraction of region pixels lit by rain in one frame.
inline double rain_pixel_probability(double intensity) { return 0.45 * (1.0 - std::exp(-intensity / 0.15)); }

/// Reflection amplitude before the per-pixel jitter and light-condition contrast.
inline double rain_amplitude(double intensity) { return 0.2 + 0.7 * (1.0 - std::exp(-intensity / 0.15)); }

namespace detail {

/// Small counter-based generator for per-pixel draws.
class FastRng {
 public:
  explicit FastRng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() { return splitmix64(state_++); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

}  // namespace detail

class SceneRenderer {
 public:
  SceneRenderer(SceneSpec spec, RainProfile profile) : spec_(std::move(spec)), profile_(std::move(profile)) {
    spec_.validate();
    profile_.validate();
    background_.resize(static_cast<std::size_t>(spec_.width) * spec_.height);
    detail::FastRng rng(splitmix64(spec_.seed ^ 0xb4c6ULL));
    for (int y = 0; y < spec_.height; ++y) {
      for (int x = 0; x < spec_.width; ++x) {
        double smooth = 0.5 + 0.25 * std::sin(0.21 * x + 0.5) * std::cos(0.17 * y + 1.3);
        background_[static_cast<std::size_t>(y) * spec_.width + x] = 0.15 + 0.3 * smooth + 0.05 * rng.uniform();
      }
    }
    region_mask_.assign(background_.size(), -1);
    for (std::size_t r = 0; r < spec_.reflection_regions.size(); ++r) {
      const auto& rect = spec_.reflection_regions[r];
      for (int y = rect.y0; y < rect.y1; ++y) {
        for (int x = rect.x0; x < rect.x1; ++x) region_mask_[static_cast<std::size_t>(y) * spec_.width + x] = static_cast<int>(r);
      }
    }
  }

  const SceneSpec& spec() const { return spec_; }
  const RainProfile& profile() const { return profile_; }
  std::size_t frame_count() const { return static_cast<std::size_t>(std::floor(spec_.duration * spec_.frame_rate + 1e-9)); }
  std::size_t audio_seconds() const { return static_cast<std::size_t>(std::floor(spec_.duration + 1e-9)); }
  std::size_t minutes() const { return static_cast<std::size_t>(std::floor(spec_.duration / 60.0 + 1e-9)); }

  double intensity_at(double t_s) const {
    return t_s < 0 ? 0.0 : profile_.at_minute(static_cast<std::size_t>(std::floor(t_s / 60.0)));
  }

  bool is_night(double t_s) const {
    for (const auto& seg : spec_.light_schedule) {
      if (t_s >= seg.start_s && t_s < seg.end_s) return seg.night;
    }
    return false;
  }

  /// Seconds since the current rain spell began (0 when dry).
  double wet_time(double t_s) const {
    if (intensity_at(t_s) <= 0) return 0;
    auto m = static_cast<std::size_t>(std::floor(t_s / 60.0));
    std::size_t first = m;
    while (first > 0 && profile_.at_minute(first - 1) > 0) --first;
    return t_s - 60.0 * static_cast<double>(first);
  }

  std::vector<std::uint8_t> frame_bytes(std::size_t index) const {
    const double t = static_cast<double>(index) / spec_.frame_rate;
    const double intensity = intensity_at(t);
    const bool night = is_night(t);
    const double light = night ? spec_.night_factor : 1.0;
    const double p = rain_pixel_probability(intensity);
    const double amp = rain_amplitude(intensity) * light;
    const bool splashing = intensity > 0 && wet_time(t) >= spec_.wetup_delay_s;
    const double noise_scale = spec_.noise_sigma * std::sqrt(6.0);
    detail::FastRng rng(splitmix64(spec_.seed * 0x9e3779b97f4a7c15ULL + index + 1));

    std::vector<std::uint8_t> out(background_.size());
    for (int y = 0; y < spec_.height; ++y) {
      for (int x = 0; x < spec_.width; ++x) {
        std::size_t i = static_cast<std::size_t>(y) * spec_.width + x;
        double v = background_[i] * light;
        double n = (rng.uniform() + rng.uniform() - 1.0) * noise_scale;
        int region = region_mask_[i];
        if (region >= 0 && intensity > 0) {
          double u = rng.uniform();
          double jitter = 0.7 + 0.3 * rng.uniform();
          const auto& rect = spec_.reflection_regions[region];
          bool in_splash = splashing && y >= rect.y1 - std::max(1, static_cast<int>(std::ceil(spec_.splash_band * (rect.y1 - rect.y0))));
          double prob = in_splash ? std::min(0.49, 1.5 * p) : p;
          if (u < prob) v += amp * jitter;
        }
        for (const auto& d : spec_.distractors) {
          if (t < d.t_start_s || t > d.t_end_s) continue;
          double f = d.t_end_s > d.t_start_s ? (t - d.t_start_s) / (d.t_end_s - d.t_start_s) : 0.0;
          double cx = d.x0 + f * (d.x1 - d.x0), cy = d.y0 + f * (d.y1 - d.y0);
          if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= d.radius * d.radius) v += d.brightness * light;
        }
        out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v + n, 0.0, 1.0) * 255.0));
      }
    }
    return out;
  }

  GrayImage frame(std::size_t index) const {
    auto bytes = frame_bytes(index);
    GrayImage img{spec_.width, spec_.height, std::vector<double>(bytes.size())};
    for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0;
    return img;
  }

  /// Unquantized samples of audio second `s`: background noise plus decaying-sinusoid impulses.
  std::vector<double> audio_raw(std::size_t s) const {
    const int sr = spec_.audio_sample_rate;
    std::mt19937_64 rng(splitmix64(spec_.seed ^ (0xa0d10ULL + s * 0x100000001b3ULL)));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.01);
    std::vector<double> x(static_cast<std::size_t>(sr));
    for (auto& v : x) v = noise(rng);
    double intensity = intensity_at(static_cast<double>(s) + 0.5);
    if (intensity > 0) {
      std::poisson_distribution<int> count(spec_.impulses_per_mm * intensity);
      int n = count(rng);
      const double tau = 0.003 * sr;
      const auto len = static_cast<std::size_t>(6 * tau);
      for (int k = 0; k < n; ++k) {
        auto at = static_cast<std::size_t>(u(rng) * sr);
        double f = (0.15 + 0.3 * u(rng)) * sr;
        double a = 0.1 + 0.25 * u(rng);
        double phase = 2 * M_PI * u(rng);
        for (std::size_t i = 0; i < len && at + i < x.size(); ++i) {
          x[at + i] += a * std::exp(-static_cast<double>(i) / tau) * std::sin(2 * M_PI * f * i / sr + phase);
        }
      }
    }
    for (auto& v : x) v = std::clamp(v, -1.0, 1.0);
    return x;
  }

  /// Audio second `s` exactly as a reader sees it after 16-bit WAV round trip.
  AudioWindow audio_window(std::size_t s) const {
    auto x = audio_raw(s);
    for (auto& v : x) v = WavWriter::quantize(v) / 32768.0;
    return {from_seconds(spec_.start_time, static_cast<double>(s)), spec_.audio_sample_rate, std::move(x)};
  }

  /// Labels keyed by minute start; is_raining iff intensity > 0.
  std::vector<RainLabel> labels() const {
    std::vector<RainLabel> out;
    for (std::size_t m = 0; m < minutes(); ++m) {
      double v = profile_.at_minute(m);
      out.push_back({spec_.start_time + std::chrono::minutes(m), v > 0, v});
    }
    return out;
  }

  /// Tipping-bucket log consistent with the profile (rain uniform within each minute), with a
  /// zero baseline record at the scene start.
  std::vector<GaugeRecord> gauge_log(double tip_mm = kTipMm) const {
    std::vector<GaugeRecord> out{{spec_.start_time, 0.0}};
    double cum = 0;
    long tips = 0;
    for (std::size_t m = 0; m < minutes(); ++m) {
      double rate = profile_.at_minute(m);
      double next = cum + rate;
      while ((tips + 1) * tip_mm <= next + 1e-12) {
        ++tips;
        double f = rate > 0 ? ((tips * tip_mm) - cum) / rate : 0.0;
        auto t = from_seconds(spec_.start_time, 60.0 * (static_cast<double>(m) + std::clamp(f, 0.0, 1.0)));
        t = std::chrono::round<std::chrono::seconds>(t);
        if (t <= out.back().t) t = out.back().t + std::chrono::seconds(1);
        out.push_back({t, tips * tip_mm});
      }
      cum = next;
    }
    return out;
  }

  /// Maximal runs of rain minutes, tagged with the light class at their start.
  std::vector<RainPeriodHint> rain_hints(std::size_t min_minutes = 1) const {
    std::vector<RainPeriodHint> out;
    std::size_t m = 0;
    while (m < minutes()) {
      if (profile_.at_minute(m) <= 0) {
        ++m;
        continue;
      }
      std::size_t end = m;
      while (end < minutes() && profile_.at_minute(end) > 0) ++end;
      if (end - m >= min_minutes) {
        out.push_back({spec_.start_time + std::chrono::minutes(m), spec_.start_time + std::chrono::minutes(end),
                       is_night(60.0 * m) ? LightClass::night : LightClass::day});
      }
      m = end;
    }
    return out;
  }

  StreamManifest manifest(const std::string& video_id = "synthetic") const {
    StreamManifest m;
    m.video_id = video_id;
    m.frame_rate = spec_.frame_rate;
    m.start_time = spec_.start_time;
    m.duration = spec_.duration;
    return m;
  }

 private:
  SceneSpec spec_;
  RainProfile profile_;
  std::vector<double> background_;
  std::vector<int> region_mask_;
};

/// Adds a moving distractor; it must cross the frame only during dry minutes of the profile.
inline SceneSpec gen_distractor(SceneSpec scene, const DistractorTrack& track, const RainProfile& profile) {
  if (!(track.t_end_s >= track.t_start_s)) throw Error("distractor track must end after it starts");
  auto first = static_cast<std::size_t>(std::floor(track.t_start_s / 60.0));
  auto last = static_cast<std::size_t>(std::floor(track.t_end_s / 60.0));
  for (std::size_t m = first; m <= last; ++m) {
    if (profile.at_minute(m) > 0) throw Error("distractor track overlaps a raining minute");
  }
  scene.distractors.push_back(track);
  return scene;
}

/// Frame source rendering the scene on demand.
inline FrameSource scene_frame_source(const SceneRenderer& scene, const std::string& video_id = "synthetic") {
  return FrameSource(scene.manifest(video_id), [&scene](std::size_t i) { return scene.frame(i); });
}

class SceneAudioSource : public AudioWindowSource {
 public:
  explicit SceneAudioSource(const SceneRenderer& scene) : scene_(scene) {}
  std::optional<AudioWindow> next() override {
    if (next_ >= scene_.audio_seconds()) return std::nullopt;
    return scene_.audio_window(next_++);
  }

 private:
  const SceneRenderer& scene_;
  std::size_t next_ = 0;
};

struct GeneratedScene {
  std::filesystem::path manifest;
  std::filesystem::path labels;
  std::filesystem::path gauge;
  std::filesystem::path hints;
};

/// Writes frames/frame_NNNNNN.pgm, audio.wav, labels.csv, gauge.csv, hints.json and
/// manifest.json under `dir`.
inline GeneratedScene gen_scene(const SceneRenderer& scene, const std::filesystem::path& dir,
                                const std::string& video_id = "synthetic") {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "frames");
  const auto& spec = scene.spec();
  char name[32];
  for (std::size_t i = 0; i < scene.frame_count(); ++i) {
    std::snprintf(name, sizeof name, "frame_%06zu.pgm", i);
    auto bytes = scene.frame_bytes(i);
    write_pgm(dir / "frames" / name, spec.width, spec.height, bytes.data());
  }
  auto manifest = scene.manifest(video_id);
  manifest.frame_dir_or_container = "frames";
  if (spec.audio) {
    WavWriter wav((dir / "audio.wav").string(), spec.audio_sample_rate);
    for (std::size_t s = 0; s < scene.audio_seconds(); ++s) wav.write(scene.audio_raw(s));
    wav.finish();
    manifest.audio_path = "audio.wav";
  }
  save_manifest(dir / "manifest.json", manifest);
  {
    std::ofstream out(dir / "labels.csv");
    write_labels_csv(out, scene.labels());
  }
  {
    std::ofstream out(dir / "gauge.csv");
    out << "timestamp_utc,cumulative_mm\n";
    for (const auto& r : scene.gauge_log()) out << format_timestamp(r.t) << ',' << format_number(r.cumulative_mm) << '\n';
  }
  {
    std::ofstream out(dir / "hints.json");
    out << hints_to_json(scene.rain_hints()).dump(2) << '\n';
  }
  return {dir / "manifest.json", dir / "labels.csv", dir / "gauge.csv", dir / "hints.json"};
}

}  // namespace rainsense
