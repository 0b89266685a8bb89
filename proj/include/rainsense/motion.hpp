// Per-pixel intensity-change maps between adjacent frames.
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "rainsense/ingest.hpp"

namespace rainsense {

struct DeltaMap {
  int width = 0;
  int height = 0;
  Timestamp t{};
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

inline DeltaMap delta_map(const GrayFrame& a, const GrayFrame& b) {
  if (a.width() != b.width() || a.height() != b.height()) throw Error("delta_map: frame dimension mismatch");
  DeltaMap m{a.width(), a.height(), b.t(), std::vector<double>(a.pixels().size())};
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = std::abs(pb[i] - pa[i]);
  return m;
}

inline DeltaMap delta_map(const FramePair& pair) { return delta_map(pair.a, pair.b); }

/// Running pixelwise mean, for averaging maps without holding them all.
class MeanAccumulator {
 public:
  void add(const DeltaMap& m) {
    if (count_ == 0) {
      width_ = m.width;
      height_ = m.height;
      sum_.assign(m.values.size(), 0.0);
      max_.assign(m.values.size(), 0.0);
    } else if (m.width != width_ || m.height != height_) {
      throw Error("mean_map: dimension mismatch");
    }
    for (std::size_t i = 0; i < sum_.size(); ++i) {
      sum_[i] += m.values[i];
      max_[i] = std::max(max_[i], m.values[i]);
    }
    last_t_ = m.t;
    ++count_;
  }

  std::size_t count() const { return count_; }

  DeltaMap mean() const {
    if (count_ == 0) throw Error("mean_map: empty input");
    DeltaMap out{width_, height_, last_t_, sum_};
    // rounding in the sum must not lift a mean above the largest input
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      out.values[i] = std::min(max_[i], out.values[i] / static_cast<double>(count_));
    }
    return out;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  Timestamp last_t_{};
  std::size_t count_ = 0;
  std::vector<double> sum_;
  std::vector<double> max_;
};

inline DeltaMap mean_map(std::span<const DeltaMap> maps) {
  if (maps.empty()) throw Error("mean_map: empty input");
  MeanAccumulator acc;
  for (const auto& m : maps) acc.add(m);
  return acc.mean();
}

}  // namespace rainsense
