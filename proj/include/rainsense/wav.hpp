// Streaming RIFF/WAV PCM reader (8/16-bit, mono/stereo) and a 16-bit mono writer.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "rainsense/common.hpp"

namespace rainsense {

struct WavFormat {
  int channels = 0;
  int sample_rate = 0;
  int bits_per_sample = 0;
  std::uint64_t frame_count = 0;  // sample frames (one per channel group)

  double duration() const { return sample_rate > 0 ? static_cast<double>(frame_count) / sample_rate : 0.0; }
};

class WavReader {
 public:
  explicit WavReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw Error("missing audio file '" + path + "'");
    parse_header();
  }

  const WavFormat& format() const { return format_; }
  std::uint64_t frames_remaining() const { return format_.frame_count - frames_read_; }

  /// Reads up to `n` mono samples in [-1,1]; stereo is averaged. Returns fewer at end of data.
  std::vector<double> read(std::size_t n) {
    std::size_t frames = static_cast<std::size_t>(std::min<std::uint64_t>(n, frames_remaining()));
    std::size_t bytes_per_frame = static_cast<std::size_t>(format_.channels) * (format_.bits_per_sample / 8);
    buffer_.resize(frames * bytes_per_frame);
    in_.read(reinterpret_cast<char*>(buffer_.data()), static_cast<std::streamsize>(buffer_.size()));
    if (in_.gcount() != static_cast<std::streamsize>(buffer_.size())) {
      throw Error("corrupt WAV '" + path_ + "': data chunk shorter than declared");
    }
    frames_read_ += frames;
    std::vector<double> out(frames);
    for (std::size_t i = 0; i < frames; ++i) {
      double acc = 0.0;
      for (int c = 0; c < format_.channels; ++c) acc += sample_at(i * format_.channels + c);
      out[i] = acc / format_.channels;
    }
    return out;
  }

 private:
  double sample_at(std::size_t idx) const {
    if (format_.bits_per_sample == 8) return (static_cast<int>(buffer_[idx]) - 128) / 128.0;
    auto lo = buffer_[2 * idx];
    auto hi = buffer_[2 * idx + 1];
    auto v = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
    return v / 32768.0;
  }

  std::uint32_t u32() {
    unsigned char b[4];
    if (!in_.read(reinterpret_cast<char*>(b), 4)) throw Error("corrupt WAV header in '" + path_ + "'");
    return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint16_t u16() {
    unsigned char b[2];
    if (!in_.read(reinterpret_cast<char*>(b), 2)) throw Error("corrupt WAV header in '" + path_ + "'");
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::string tag() {
    char t[4];
    if (!in_.read(t, 4)) throw Error("corrupt WAV header in '" + path_ + "'");
    return std::string(t, 4);
  }

  void parse_header() {
    if (tag() != "RIFF") throw Error("corrupt WAV header in '" + path_ + "': not RIFF");
    u32();
    if (tag() != "WAVE") throw Error("corrupt WAV header in '" + path_ + "': not WAVE");
    bool have_fmt = false;
    while (true) {
      std::string id = tag();
      std::uint32_t size = u32();
      if (id == "fmt ") {
        if (size < 16) throw Error("corrupt WAV header in '" + path_ + "': short fmt chunk");
        std::uint16_t audio_format = u16();
        format_.channels = u16();
        format_.sample_rate = static_cast<int>(u32());
        u32();
        u16();
        format_.bits_per_sample = u16();
        std::uint32_t consumed = 16;
        if (audio_format == 0xFFFE && size >= 40) {
          u16();
          u16();
          u32();
          audio_format = u16();  // first two bytes of the subformat GUID
          consumed += 10;
        }
        in_.ignore(size - consumed + (size & 1));
        if (audio_format != 1) throw Error("unsupported WAV encoding in '" + path_ + "': not linear PCM");
        if (format_.bits_per_sample != 8 && format_.bits_per_sample != 16) {
          throw Error("unsupported WAV encoding in '" + path_ + "': " + std::to_string(format_.bits_per_sample) +
                      "-bit");
        }
        if (format_.channels < 1 || format_.channels > 2) {
          throw Error("unsupported WAV encoding in '" + path_ + "': " + std::to_string(format_.channels) +
                      " channels");
        }
        if (format_.sample_rate <= 0) throw Error("corrupt WAV header in '" + path_ + "': zero sample rate");
        have_fmt = true;
      } else if (id == "data") {
        if (!have_fmt) throw Error("corrupt WAV header in '" + path_ + "': data before fmt");
        format_.frame_count = size / (format_.channels * (format_.bits_per_sample / 8));
        return;
      } else {
        in_.ignore(size + (size & 1));
      }
      if (!in_) throw Error("corrupt WAV header in '" + path_ + "': no data chunk");
    }
  }

  std::string path_;
  std::ifstream in_;
  WavFormat format_;
  std::uint64_t frames_read_ = 0;
  std::vector<std::uint8_t> buffer_;
};

/// Writes 16-bit mono PCM. Samples are clamped to [-1,1] and quantized as round(x*32767).
class WavWriter {
 public:
  WavWriter(const std::string& path, int sample_rate) : path_(path), out_(path, std::ios::binary), rate_(sample_rate) {
    if (!out_) throw Error("cannot write '" + path + "'");
    write_header(0);
  }
  WavWriter(const WavWriter&) = delete;
  WavWriter& operator=(const WavWriter&) = delete;
  ~WavWriter() {
    if (out_.is_open()) finish();
  }

  static std::int16_t quantize(double x) {
    return static_cast<std::int16_t>(std::lround(std::clamp(x, -1.0, 1.0) * 32767.0));
  }

  void write(const std::vector<double>& samples) {
    for (double s : samples) {
      auto v = static_cast<std::uint16_t>(quantize(s));
      char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
      out_.write(b, 2);
    }
    count_ += samples.size();
  }

  void finish() {
    out_.seekp(0);
    write_header(count_);
    out_.close();
  }

 private:
  void put32(std::uint32_t v) {
    char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                 static_cast<char>(v >> 24)};
    out_.write(b, 4);
  }
  void put16(std::uint16_t v) {
    char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
    out_.write(b, 2);
  }
  void write_header(std::uint64_t samples) {
    auto data_bytes = static_cast<std::uint32_t>(samples * 2);
    out_.write("RIFF", 4);
    put32(36 + data_bytes);
    out_.write("WAVEfmt ", 8);
    put32(16);
    put16(1);
    put16(1);
    put32(static_cast<std::uint32_t>(rate_));
    put32(static_cast<std::uint32_t>(rate_ * 2));
    put16(2);
    put16(16);
    out_.write("data", 4);
    put32(data_bytes);
  }

  std::string path_;
  std::ofstream out_;
  int rate_;
  std::uint64_t count_ = 0;
};

}  // namespace rainsense
