// Shared fixtures for the test binaries: scratch directories, seeded generators, tiny scenes.
#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rainsense/synth.hpp"

namespace testing_support {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "rainsense") {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Seeded value generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo = 0, double hi = 1) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return uniform() < p; }
  double normal(double sd = 1) { return std::normal_distribution<double>(0, sd)(rng_); }
  std::vector<double> vec(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline rainsense::Timestamp ts(const std::string& s) { return rainsense::parse_timestamp(s); }

inline rainsense::DeltaMap random_map(Gen& g, int w, int h, double sparsity = 0.5) {
  rainsense::DeltaMap m{w, h, {}, std::vector<double>(static_cast<std::size_t>(w) * h)};
  for (auto& v : m.values) {
    // mix exact gray levels, threshold-adjacent values and arbitrary reals
    double r = g.uniform();
    if (r < sparsity) v = 0;
    else if (r < sparsity + 0.2) v = g.integer(0, 255) / 255.0;
    else v = g.uniform();
  }
  return m;
}

/// A small day-lit scene with planted reflection regions.
inline rainsense::SceneSpec small_scene(std::vector<rainsense::Rect> regions, double duration_s, std::uint64_t seed) {
  rainsense::SceneSpec s;
  s.width = 64;
  s.height = 48;
  s.frame_rate = 1.0;
  s.duration = duration_s;
  s.start_time = ts("2024-06-01T00:00:00Z");
  s.reflection_regions = std::move(regions);
  s.audio_sample_rate = 2000;
  s.seed = seed;
  return s;
}

}  // namespace testing_support
