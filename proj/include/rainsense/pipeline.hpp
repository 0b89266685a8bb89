// Streaming ingest -> motion -> features pipeline producing one MinuteFeature per minute.
#pragma once

#include <condition_variable>
#include <deque>
#include <exception>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include "rainsense/features.hpp"
#include "rainsense/ingest.hpp"

namespace rainsense {

/// Blocking single-producer/single-consumer queue with a fixed capacity.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

  void push(T value) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
  }

  /// Empty optional once the queue is closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct ExtractOptions {
  double interval_s = 5.0;
  FeatureThresholds thresholds;
  bool concurrent = false;  // decode frames on a producer thread
  std::size_t queue_capacity = 8;
  std::ostream* log = nullptr;
};

/// Walks the stream minute by minute, holding only the current minute's feature vectors.
/// The trailing minute is dropped unless the stream covers all of it.
class MinuteExtractor {
 public:
  using Sink = std::function<void(const MinuteFeature&)>;

  MinuteExtractor(const FrameSource& frames, AudioWindowSource* audio, const RoISet& rois, ExtractOptions opt = {})
      : frames_(frames), audio_(audio), rois_(rois), opt_(opt), sampler_(frames, opt.interval_s) {
    if (rois.frame_width != frames.width() || rois.frame_height != frames.height()) {
      throw Error("RoI set was built for " + std::to_string(rois.frame_width) + "x" +
                  std::to_string(rois.frame_height) + " frames, stream is " + std::to_string(frames.width()) + "x" +
                  std::to_string(frames.height()));
    }
  }

  std::size_t pairs_per_minute() const { return static_cast<std::size_t>(std::llround(60.0 / opt_.interval_s)); }

  void run(const Sink& sink) {
    const auto& m = frames_.manifest();
    stream_end_ = from_seconds(m.start_time, m.duration);
    if (opt_.concurrent) {
      run_concurrent(sink);
    } else {
      for (std::size_t k = 0; k < sampler_.size(); ++k) consume(sampler_.pair(k), sink);
    }
    flush(sink);
  }

 private:
  void run_concurrent(const Sink& sink) {
    BoundedQueue<FramePair> queue(opt_.queue_capacity);
    std::exception_ptr failure;
    std::thread producer([&] {
      try {
        for (std::size_t k = 0; k < sampler_.size(); ++k) queue.push(sampler_.pair(k));
      } catch (...) {
        failure = std::current_exception();
      }
      queue.close();
    });
    try {
      while (auto pair = queue.pop()) consume(*pair, sink);
    } catch (...) {
      queue.close();
      producer.join();
      throw;
    }
    producer.join();
    if (failure) std::rethrow_exception(failure);
  }

  void consume(const FramePair& pair, const Sink& sink) {
    auto minute = truncate_minute(pair.t());
    if (current_ && minute != *current_) emit(sink);
    current_ = minute;
    visuals_.push_back(visual_vector(pair, rois_, opt_.thresholds));
  }

  void flush(const Sink& sink) {
    if (current_) emit(sink);
  }

  void emit(const Sink& sink) {
    auto minute = *current_;
    std::vector<AudioFeatures> audios;
    if (audio_) {
      while (true) {
        if (!pending_) pending_ = audio_->next();
        if (!pending_) break;
        auto wm = truncate_minute(pending_->t_start);
        if (wm < minute) {
          pending_.reset();
          continue;
        }
        if (wm > minute) break;
        audios.push_back(audio_features(*pending_));
        pending_.reset();
      }
    }
    bool trailing_partial = minute + std::chrono::minutes(1) > stream_end_;
    if (trailing_partial) {
      if (opt_.log) *opt_.log << "dropping partial trailing minute " << format_timestamp(minute) << '\n';
    } else if (auto mf = minute_aggregate(visuals_, audios, minute, pairs_per_minute(), 60)) {
      sink(*mf);
    }
    visuals_.clear();
    current_.reset();
  }

  const FrameSource& frames_;
  AudioWindowSource* audio_;
  const RoISet& rois_;
  ExtractOptions opt_;
  PairSampler sampler_;
  Timestamp stream_end_{};
  std::optional<Timestamp> current_;
  std::vector<VisualFeatures> visuals_;
  std::optional<AudioWindow> pending_;
};

/// Convenience: open a manifest's frames and audio and collect all minute rows.
inline std::vector<MinuteFeature> extract_minutes(const StreamManifest& manifest, const RoISet& rois,
                                                  const ExtractOptions& opt = {}) {
  FrameSource frames(manifest);
  std::unique_ptr<WavWindowSource> audio;
  if (manifest.audio_path) audio = std::make_unique<WavWindowSource>(*manifest.audio_path, manifest.start_time);
  std::vector<MinuteFeature> out;
  MinuteExtractor ex(frames, audio.get(), rois, opt);
  ex.run([&](const MinuteFeature& m) { out.push_back(m); });
  return out;
}

inline FeatureRow to_row(const MinuteFeature& m) { return FeatureRow{m.minute, m.row(), m.complete, {}, {}}; }

}  // namespace rainsense
