#include <gtest/gtest.h>

#include <fstream>

#include "rainsense/features.hpp"
#include "rainsense/synth.hpp"
#include "support.hpp"

using namespace rainsense;
using testing_support::Gen;
using testing_support::small_scene;
using testing_support::TempDir;

namespace {

const Rect kRegion{20, 15, 44, 35};

RainProfile constant(std::size_t minutes, double v) { return RainProfile{std::vector<double>(minutes, v)}; }

// mean density feature inside the region over all 5 s pairs of the scene
double mean_density(const SceneRenderer& scene) {
  auto src = scene_frame_source(scene);
  RoISet rois{{kRegion.as_roi(1)}, scene.spec().width, scene.spec().height};
  double sum = 0;
  auto pairs = sample_pairs(src, 5.0);
  for (const auto& p : pairs) sum += visual_vector(p, rois).values[2];
  return sum / static_cast<double>(pairs.size());
}

double audio_energy(const SceneRenderer& scene) {
  double e = 0;
  for (std::size_t s = 0; s < scene.audio_seconds(); ++s) e += audio_features(scene.audio_window(s)).ae;
  return e;
}

}  // namespace

TEST(Synth, SameSeedBitIdentical) {
  auto spec = small_scene({kRegion}, 120, 9);
  SceneRenderer a(spec, constant(2, 0.1)), b(spec, constant(2, 0.1));
  for (std::size_t i : {0, 37, 119}) EXPECT_EQ(a.frame_bytes(i), b.frame_bytes(i));
  EXPECT_EQ(a.audio_raw(5), b.audio_raw(5));
  spec.seed = 10;
  SceneRenderer c(spec, constant(2, 0.1));
  EXPECT_NE(a.frame_bytes(37), c.frame_bytes(37));
}

TEST(Synth, ZeroProfileIsStaticAndDry) {
  SceneRenderer scene(small_scene({kRegion}, 180, 3), constant(3, 0.0));
  for (const auto& l : scene.labels()) EXPECT_FALSE(l.is_raining);
  EXPECT_EQ(scene.gauge_log().size(), 1u);
  EXPECT_TRUE(scene.rain_hints().empty());
  EXPECT_LT(mean_density(scene), 1e-3);
  auto f = audio_features(scene.audio_window(10));
  EXPECT_LT(f.rmse, 0.02);
}

TEST(Synth, HeavierEventDenserInRegions) {
  auto spec = small_scene({kRegion}, 600, 4);
  std::vector<double> v(10, 0.0);
  for (int m = 1; m < 4; ++m) v[m] = 0.05;
  for (int m = 6; m < 9; ++m) v[m] = 0.2;
  SceneRenderer scene(spec, RainProfile{v});
  auto src = scene_frame_source(scene);
  RoISet rois{{kRegion.as_roi(1)}, spec.width, spec.height};
  double light = 0, heavy = 0;
  for (const auto& p : sample_pairs(src, 5.0)) {
    double minute = std::floor(std::chrono::duration<double>(p.t() - spec.start_time).count() / 60.0);
    double d = visual_vector(p, rois).values[2];
    if (minute >= 1 && minute < 4) light += d;
    if (minute >= 6 && minute < 9) heavy += d;
  }
  EXPECT_GT(heavy, light);
}

TEST(SynthProperty, DensityAndEnergyMonotoneInIntensity) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    double prev_density = -1, prev_energy = -1;
    for (double level : {0.0, 0.02, 0.05, 0.1, 0.2, 0.4}) {
      SceneRenderer scene(small_scene({kRegion}, 120, seed), constant(2, level));
      double d = mean_density(scene), e = audio_energy(scene);
      EXPECT_GT(d, prev_density) << "level " << level;
      EXPECT_GT(e, prev_energy) << "level " << level;
      prev_density = d;
      prev_energy = e;
    }
  }
}

TEST(Synth, NightDimsScene) {
  auto spec = small_scene({kRegion}, 120, 5);
  spec.light_schedule = {{60, 120, true}};
  SceneRenderer scene(spec, constant(2, 0.0));
  auto mean = [](const std::vector<std::uint8_t>& b) {
    double s = 0;
    for (auto v : b) s += v;
    return s / static_cast<double>(b.size());
  };
  EXPECT_NEAR(mean(scene.frame_bytes(90)), 0.5 * mean(scene.frame_bytes(10)), 1.0);
}

TEST(Synth, LabelsAndGaugeCarryTheProfile) {
  Gen g(81);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> v(30);
    for (auto& x : v) x = g.coin(0.4) ? g.uniform(0.01, 0.5) : 0.0;
    SceneRenderer scene(small_scene({kRegion}, 1800, trial), RainProfile{v});
    auto labels = scene.labels();
    ASSERT_EQ(labels.size(), 30u);
    double total = 0;
    for (std::size_t m = 0; m < 30; ++m) {
      EXPECT_EQ(labels[m].intensity_mm_per_min, v[m]);
      EXPECT_EQ(labels[m].is_raining, v[m] > 0);
      total += v[m];
    }
    auto gauge = scene.gauge_log();
    EXPECT_EQ(gauge.front().cumulative_mm, 0.0);
    EXPECT_NEAR(gauge.back().cumulative_mm, kTipMm * std::floor(total / kTipMm + 1e-9), 1e-9);
    for (std::size_t i = 1; i < gauge.size(); ++i) EXPECT_LT(gauge[i - 1].t, gauge[i].t);
  }
}

TEST(Synth, HintsCoverRainRuns) {
  std::vector<double> v{0, 0.1, 0.1, 0, 0, 0.2, 0};
  auto spec = small_scene({kRegion}, 420, 6);
  spec.light_schedule = {{300, 420, true}};
  SceneRenderer scene(spec, RainProfile{v});
  auto hints = scene.rain_hints();
  ASSERT_EQ(hints.size(), 2u);
  EXPECT_EQ(hints[0].start, spec.start_time + std::chrono::minutes(1));
  EXPECT_EQ(hints[0].end, spec.start_time + std::chrono::minutes(3));
  EXPECT_EQ(hints[0].light, LightClass::day);
  EXPECT_EQ(hints[1].light, LightClass::night);
  EXPECT_EQ(scene.rain_hints(2).size(), 1u);
}

TEST(Distractor, MustAvoidRainingMinutes) {
  auto spec = small_scene({kRegion}, 300, 7);
  RainProfile p{{0, 0.1, 0, 0, 0}};
  EXPECT_THROW(gen_distractor(spec, {50, 70, 0, 0, 63, 47}, p), Error);
  EXPECT_NO_THROW(gen_distractor(spec, {130, 170, 0, 0, 63, 47}, p));
  EXPECT_THROW(gen_distractor(spec, {170, 130, 0, 0, 63, 47}, p), Error);
}

TEST(Distractor, OutsideRegionLeavesRegionUnchanged) {
  auto spec = small_scene({kRegion}, 120, 8);
  RainProfile p = constant(2, 0.0);
  // travels along the top edge, well clear of the region
  auto with = gen_distractor(spec, {0, 119, 2, 4, 60, 4}, p);
  SceneRenderer plain(spec, p), moving(with, p);
  RoISet rois{{kRegion.as_roi(1)}, spec.width, spec.height};
  auto a = scene_frame_source(plain), b = scene_frame_source(moving);
  auto pa = sample_pairs(a), pb = sample_pairs(b);
  ASSERT_EQ(pa.size(), pb.size());
  bool outside_moved = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(visual_vector(pa[i], rois).values, visual_vector(pb[i], rois).values);
    outside_moved |= pa[i].b.at(30, 4) != pb[i].b.at(30, 4) || pa[i].b.at(10, 4) != pb[i].b.at(10, 4);
  }
  EXPECT_TRUE(outside_moved);
}

TEST(Distractor, ThroughRegionRaisesMaxDelta) {
  auto spec = small_scene({kRegion}, 120, 8);
  RainProfile p = constant(2, 0.0);
  auto with = gen_distractor(spec, {0, 119, 0, 25, 63, 25}, p);
  SceneRenderer plain(spec, p), moving(with, p);
  RoISet rois{{kRegion.as_roi(1)}, spec.width, spec.height};
  auto a = scene_frame_source(plain), b = scene_frame_source(moving);
  double max_plain = 0, max_moving = 0;
  for (const auto& pr : sample_pairs(a)) max_plain = std::max(max_plain, visual_vector(pr, rois).values[0]);
  for (const auto& pr : sample_pairs(b)) max_moving = std::max(max_moving, visual_vector(pr, rois).values[0]);
  EXPECT_GT(max_moving, max_plain + 0.2);
}

TEST(GenScene, FilesReadBackAsRendered) {
  TempDir dir("scene");
  std::vector<double> v{0, 0.3, 0.3, 0};
  SceneRenderer scene(small_scene({kRegion}, 240, 10), RainProfile{v});
  auto out = gen_scene(scene, dir.path(), "cam7");

  auto manifest = load_manifest(out.manifest);
  EXPECT_EQ(manifest.video_id, "cam7");
  FrameSource disk(manifest);
  ASSERT_EQ(disk.size(), scene.frame_count());
  for (std::size_t i : {0, 70, 239}) {
    auto got = disk.frame(i).pixels();
    auto want = scene.frame(i).pixels;
    EXPECT_TRUE(std::equal(got.begin(), got.end(), want.begin(), want.end()));
  }
  auto windows = audio_windows(*manifest.audio_path, manifest.start_time);
  ASSERT_EQ(windows.size(), 240u);
  EXPECT_EQ(windows[100].samples, scene.audio_window(100).samples);

  std::ifstream labels(out.labels);
  auto l = read_labels_csv(labels);
  ASSERT_EQ(l.size(), 4u);
  EXPECT_EQ(l[1].intensity_mm_per_min, 0.3);
  std::ifstream gauge(out.gauge);
  EXPECT_EQ(parse_gauge(gauge).back().cumulative_mm, scene.gauge_log().back().cumulative_mm);
  EXPECT_EQ(load_hints(out.hints).size(), 1u);
}

TEST(SceneJson, ParsesEventProfile) {
  auto p = profile_from_json(nlohmann::json::parse(
      R"({"minutes":10,"events":[{"start_minute":2,"minutes":3,"intensity":0.1},{"start_minute":7,"minutes":1,"intensity":0.4}]})"));
  ASSERT_EQ(p.intensity_mm_per_min.size(), 10u);
  EXPECT_EQ(p.at_minute(3), 0.1);
  EXPECT_EQ(p.at_minute(5), 0.0);
  EXPECT_EQ(p.at_minute(7), 0.4);
  EXPECT_EQ(p.at_minute(99), 0.0);
  EXPECT_THROW(profile_from_json(nlohmann::json::parse(R"({"intensity_mm_per_min":[0.1,-1]})")), Error);
  auto s = scene_from_json(nlohmann::json::parse(
      R"({"width":32,"height":24,"duration":60,"start_time":"2024-06-01T00:00:00Z",)"
      R"("reflection_regions":[{"x0":1,"y0":1,"x1":10,"y1":10}],"seed":5})"));
  EXPECT_EQ(s.width, 32);
  EXPECT_EQ(s.reflection_regions.size(), 1u);
  EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"({"width":32,"height":24,"duration":60,"start_time":"2024-06-01T00:00:00Z",)"
                                                         R"("reflection_regions":[{"x0":1,"y0":1,"x1":40,"y1":10}]})")),
               Error);
}
