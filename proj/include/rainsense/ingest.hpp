// Frame and audio ingestion: manifests, lazily decoded frame sources, pair sampling, 1 s audio windows.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rainsense/common.hpp"
#include "rainsense/image_io.hpp"
#include "rainsense/wav.hpp"

namespace rainsense {

struct StreamManifest {
  std::string video_id;
  std::filesystem::path frame_dir_or_container;
  double frame_rate = 0.0;
  Timestamp start_time{};
  std::optional<std::filesystem::path> audio_path;
  double duration = 0.0;

  /// Frames the stream is expected to contain; trailing partial frames are dropped.
  std::size_t frame_count() const {
    return static_cast<std::size_t>(std::floor(duration * frame_rate + 1e-9));
  }

  void validate() const {
    if (!(frame_rate > 0.0) || !std::isfinite(frame_rate)) throw Error("manifest: frame_rate must be positive");
    if (!(duration > 0.0)) throw Error("empty stream: manifest duration must be positive");
  }
};

inline nlohmann::json to_json(const StreamManifest& m) {
  nlohmann::json j;
  j["video_id"] = m.video_id;
  j["frame_dir_or_container"] = m.frame_dir_or_container.string();
  j["frame_rate"] = m.frame_rate;
  j["start_time"] = format_timestamp(m.start_time);
  j["audio_path"] = m.audio_path ? nlohmann::json(m.audio_path->string()) : nlohmann::json(nullptr);
  j["duration"] = m.duration;
  return j;
}

/// Relative paths in the file are resolved against the manifest's directory.
inline StreamManifest load_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw Error("manifest '" + path.string() + "': " + e.what());
  }
  auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  StreamManifest m;
  try {
    m.video_id = j.at("video_id").get<std::string>();
    m.frame_dir_or_container = resolve(j.at("frame_dir_or_container").get<std::string>());
    m.frame_rate = j.at("frame_rate").get<double>();
    m.start_time = parse_timestamp(j.at("start_time").get<std::string>());
    if (j.contains("audio_path") && !j["audio_path"].is_null()) m.audio_path = resolve(j["audio_path"].get<std::string>());
    m.duration = j.at("duration").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("manifest '" + path.string() + "': " + e.what());
  }
  m.validate();
  return m;
}

inline void save_manifest(const std::filesystem::path& path, const StreamManifest& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << to_json(m).dump(2) << '\n';
}

/// Timestamped luminance image; immutable after construction.
class GrayFrame {
 public:
  GrayFrame() = default;
  GrayFrame(int width, int height, Timestamp t, std::vector<double> pixels)
      : width_(width), height_(height), t_(t), pixels_(std::move(pixels)) {
    if (width_ <= 0 || height_ <= 0 || pixels_.size() != static_cast<std::size_t>(width_) * height_) {
      throw Error("frame dimensions do not match pixel count");
    }
    for (double v : pixels_) {
      if (!(v >= 0.0 && v <= 1.0)) throw Error("frame pixel outside [0,1]");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  Timestamp t() const { return t_; }
  std::span<const double> pixels() const { return pixels_; }
  double at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

 private:
  int width_ = 0;
  int height_ = 0;
  Timestamp t_{};
  std::vector<double> pixels_;
};

struct FramePair {
  GrayFrame a;
  GrayFrame b;
  Timestamp t() const { return b.t(); }
};

struct AudioWindow {
  Timestamp t_start{};
  int sample_rate = 0;
  std::vector<double> samples;
};

/// Random-access, lazily decoded frames of one stream. Backed by an image directory,
/// a raw 8-bit container, or an in-memory generator.
class FrameSource {
 public:
  using Generator = std::function<GrayImage(std::size_t index)>;

  /// Raw container layout: ASCII line `GRAYRAW1 <width> <height> <count>\n`, then count*width*height bytes.
  static constexpr const char* kRawMagic = "GRAYRAW1";

  explicit FrameSource(StreamManifest manifest) : manifest_(std::move(manifest)) {
    manifest_.validate();
    count_ = manifest_.frame_count();
    if (count_ == 0) throw Error("empty stream: duration shorter than one frame");
    const auto& loc = manifest_.frame_dir_or_container;
    if (std::filesystem::is_directory(loc)) {
      index_directory(loc);
    } else if (std::filesystem::is_regular_file(loc)) {
      open_container(loc);
    } else {
      throw Error("missing frame source '" + loc.string() + "'");
    }
    check_audio();
    auto first = decode(0);
    width_ = first.width;
    height_ = first.height;
  }

  FrameSource(StreamManifest manifest, Generator gen) : manifest_(std::move(manifest)), generator_(std::move(gen)) {
    manifest_.validate();
    count_ = manifest_.frame_count();
    if (count_ == 0) throw Error("empty stream: duration shorter than one frame");
    auto first = generator_(0);
    width_ = first.width;
    height_ = first.height;
  }

  const StreamManifest& manifest() const { return manifest_; }
  std::size_t size() const { return count_; }
  int width() const { return width_; }
  int height() const { return height_; }

  Timestamp timestamp(std::size_t index) const {
    return from_seconds(manifest_.start_time, static_cast<double>(index) / manifest_.frame_rate);
  }

  GrayFrame frame(std::size_t index) const {
    if (index >= count_) throw Error("frame index out of range");
    auto img = decode(index);
    if (img.width != width_ || img.height != height_) {
      throw Error("frame " + std::to_string(index) + " has mismatched dimensions");
    }
    return GrayFrame(img.width, img.height, timestamp(index), std::move(img.pixels));
  }

  class iterator {
   public:
    using value_type = GrayFrame;
    using difference_type = std::ptrdiff_t;
    iterator() = default;
    iterator(const FrameSource* src, std::size_t i) : src_(src), i_(i) {}
    GrayFrame operator*() const { return src_->frame(i_); }
    iterator& operator++() {
      ++i_;
      return *this;
    }
    iterator operator++(int) {
      auto tmp = *this;
      ++i_;
      return tmp;
    }
    bool operator==(const iterator& o) const { return i_ == o.i_; }

   private:
    const FrameSource* src_ = nullptr;
    std::size_t i_ = 0;
  };

  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, count_}; }

 private:
  void index_directory(const std::filesystem::path& dir) {
    std::vector<std::pair<long long, std::filesystem::path>> found;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      auto ext = entry.path().extension().string();
      for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (ext != ".pgm" && ext != ".png" && ext != ".ppm") continue;
      auto stem = entry.path().stem().string();
      auto end = stem.find_last_of("0123456789");
      if (end == std::string::npos) throw Error("frame file without index: '" + entry.path().string() + "'");
      auto begin = stem.find_last_not_of("0123456789", end);
      begin = begin == std::string::npos ? 0 : begin + 1;
      found.emplace_back(std::stoll(stem.substr(begin, end - begin + 1)), entry.path());
    }
    std::sort(found.begin(), found.end());
    for (std::size_t i = 1; i < found.size(); ++i) {
      if (found[i].first == found[i - 1].first) {
        throw Error("non-monotonic frame timestamps: duplicate frame index " + std::to_string(found[i].first));
      }
      if (found[i].first != found[i - 1].first + 1) {
        throw Error("frames not contiguous: missing frame index " + std::to_string(found[i - 1].first + 1));
      }
    }
    if (found.size() < count_) {
      throw Error("missing frame file: stream needs " + std::to_string(count_) + " frames, found " +
                  std::to_string(found.size()));
    }
    found.resize(count_);
    for (auto& f : found) files_.push_back(std::move(f.second));
  }

  void open_container(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::string magic;
    int w = 0, h = 0;
    std::size_t n = 0;
    if (!(in >> magic >> w >> h >> n) || magic != kRawMagic || w <= 0 || h <= 0) {
      throw Error("undecodable frame container '" + file.string() + "'");
    }
    in.get();
    raw_offset_ = static_cast<std::size_t>(in.tellg());
    raw_w_ = w;
    raw_h_ = h;
    if (n < count_) {
      throw Error("missing frame: container holds " + std::to_string(n) + " frames, stream needs " +
                  std::to_string(count_));
    }
    auto need = raw_offset_ + count_ * static_cast<std::size_t>(w) * h;
    if (std::filesystem::file_size(file) < need) throw Error("truncated frame container '" + file.string() + "'");
    container_ = file;
  }

  void check_audio() const {
    if (!manifest_.audio_path) return;
    WavReader reader(manifest_.audio_path->string());
    if (std::abs(reader.format().duration() - manifest_.duration) > 1.0) {
      throw Error("audio duration " + format_number(reader.format().duration()) +
                  " s differs from stream duration by more than 1 s");
    }
  }

  GrayImage decode(std::size_t index) const {
    if (generator_) return generator_(index);
    if (!container_.empty()) {
      std::ifstream in(container_, std::ios::binary);
      std::size_t n = static_cast<std::size_t>(raw_w_) * raw_h_;
      in.seekg(static_cast<std::streamoff>(raw_offset_ + index * n));
      std::vector<unsigned char> raw(n);
      in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
      if (in.gcount() != static_cast<std::streamsize>(n)) throw Error("truncated frame container");
      GrayImage img{raw_w_, raw_h_, std::vector<double>(n)};
      for (std::size_t i = 0; i < n; ++i) img.pixels[i] = raw[i] / 255.0;
      return img;
    }
    return read_image(files_[index]);
  }

  StreamManifest manifest_;
  Generator generator_;
  std::size_t count_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::vector<std::filesystem::path> files_;
  std::filesystem::path container_;
  std::size_t raw_offset_ = 0;
  int raw_w_ = 0;
  int raw_h_ = 0;
};

/// Writes frames into the raw container format read by FrameSource.
inline void write_raw_container(const std::filesystem::path& path, int width, int height,
                                const std::vector<std::vector<unsigned char>>& frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << FrameSource::kRawMagic << ' ' << width << ' ' << height << ' ' << frames.size() << '\n';
  for (const auto& f : frames) out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size()));
}

/// Picks, for tick k at k*interval seconds, the adjacent frames (j, j+1) with j = round(k*interval*fps).
/// Only ticks whose whole interval lies inside the stream are emitted.
class PairSampler {
 public:
  PairSampler(const FrameSource& source, double interval_s = 5.0) : source_(&source), interval_(interval_s) {
    double fps = source.manifest().frame_rate;
    if (!(interval_s >= 2.0 / fps - 1e-12)) {
      throw Error("sampling interval must be at least two frame periods");
    }
    auto ticks = static_cast<std::size_t>(std::floor(source.manifest().duration / interval_s + 1e-9));
    while (ticks > 0 && first_index(ticks - 1) + 1 >= source.size()) --ticks;
    ticks_ = ticks;
  }

  std::size_t size() const { return ticks_; }
  double interval() const { return interval_; }

  std::size_t first_index(std::size_t tick) const {
    return static_cast<std::size_t>(std::llround(tick * interval_ * source_->manifest().frame_rate));
  }
  Timestamp tick_time(std::size_t tick) const { return source_->timestamp(first_index(tick) + 1); }

  FramePair pair(std::size_t tick) const {
    auto j = first_index(tick);
    return FramePair{source_->frame(j), source_->frame(j + 1)};
  }

 private:
  const FrameSource* source_;
  double interval_;
  std::size_t ticks_ = 0;
};

inline std::vector<FramePair> sample_pairs(const FrameSource& source, double interval_s = 5.0) {
  PairSampler sampler(source, interval_s);
  std::vector<FramePair> out;
  out.reserve(sampler.size());
  for (std::size_t k = 0; k < sampler.size(); ++k) out.push_back(sampler.pair(k));
  return out;
}

/// Sequential producer of consecutive 1 s windows.
class AudioWindowSource {
 public:
  virtual ~AudioWindowSource() = default;
  virtual std::optional<AudioWindow> next() = 0;
};

/// Streams windows from a PCM WAV file; the trailing partial second is dropped.
class WavWindowSource : public AudioWindowSource {
 public:
  WavWindowSource(const std::filesystem::path& path, Timestamp start) : reader_(path.string()), start_(start) {}

  int sample_rate() const { return reader_.format().sample_rate; }

  std::optional<AudioWindow> next() override {
    auto rate = static_cast<std::size_t>(reader_.format().sample_rate);
    if (reader_.frames_remaining() < rate) return std::nullopt;
    AudioWindow w{from_seconds(start_, static_cast<double>(index_)), reader_.format().sample_rate, reader_.read(rate)};
    ++index_;
    return w;
  }

 private:
  WavReader reader_;
  Timestamp start_;
  std::size_t index_ = 0;
};

inline std::vector<AudioWindow> audio_windows(const std::filesystem::path& path, Timestamp start_time) {
  WavWindowSource src(path, start_time);
  std::vector<AudioWindow> out;
  while (auto w = src.next()) out.push_back(std::move(*w));
  return out;
}

}  // namespace rainsense
