// AutoRoI: discover rectangular regions with consistently strong rain reflections from a few
// user-declared raining periods.
//
// composite_map -> filter_weak -> weighted_kmeans -> cluster_bbox, once at training time.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "rainsense/ingest.hpp"
#include "rainsense/motion.hpp"

namespace rainsense {

enum class LightClass { day, night };

inline std::string to_string(LightClass c) { return c == LightClass::day ? "day" : "night"; }

inline LightClass parse_light_class(const std::string& s) {
  if (s == "day") return LightClass::day;
  if (s == "night") return LightClass::night;
  throw Error("light class must be 'day' or 'night', got '" + s + "'");
}

struct RainPeriodHint {
  Timestamp start{};
  Timestamp end{};
  LightClass light = LightClass::day;
};

inline std::vector<RainPeriodHint> parse_hints(const nlohmann::json& j) {
  const auto& list = j.is_object() ? j.at("hints") : j;
  std::vector<RainPeriodHint> hints;
  for (const auto& h : list) {
    RainPeriodHint hint{parse_timestamp(h.at("start").get<std::string>()),
                        parse_timestamp(h.at("end").get<std::string>()),
                        parse_light_class(h.value("light_class", std::string("day")))};
    if (!(hint.start < hint.end)) throw Error("rain hint must have start < end");
    hints.push_back(hint);
  }
  return hints;
}

inline std::vector<RainPeriodHint> load_hints(const std::filesystem::path& path) {
  try {
    return parse_hints(nlohmann::json::parse(read_text_file(path.string())));
  } catch (const nlohmann::json::exception& e) {
    throw Error("hints '" + path.string() + "': " + e.what());
  }
}

inline nlohmann::json hints_to_json(const std::vector<RainPeriodHint>& hints) {
  auto arr = nlohmann::json::array();
  for (const auto& h : hints) {
    arr.push_back({{"start", format_timestamp(h.start)}, {"end", format_timestamp(h.end)},
                   {"light_class", to_string(h.light)}});
  }
  return arr;
}

struct WeightedPoint {
  double x = 0;
  double y = 0;
  double w = 0;
};

/// Pixel bounds, inclusive-exclusive.
struct RoI {
  int id = 0;
  int x_lo = 0;
  int y_lo = 0;
  int x_hi = 0;
  int y_hi = 0;

  int area() const { return (x_hi - x_lo) * (y_hi - y_lo); }
  bool operator==(const RoI&) const = default;
};

inline double iou(const RoI& a, const RoI& b) {
  int ix = std::max(0, std::min(a.x_hi, b.x_hi) - std::max(a.x_lo, b.x_lo));
  int iy = std::max(0, std::min(a.y_hi, b.y_hi) - std::max(a.y_lo, b.y_lo));
  double inter = static_cast<double>(ix) * iy;
  double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

struct RoISet {
  static constexpr int kVersion = 1;
  static constexpr int kMaxRegions = 8;

  std::vector<RoI> rois;
  int frame_width = 0;
  int frame_height = 0;
  std::string source_hash;

  int k() const { return static_cast<int>(rois.size()); }

  void validate() const {
    if (rois.empty() || k() > kMaxRegions) throw Error("RoI set must hold between 1 and 8 regions");
    for (std::size_t i = 0; i < rois.size(); ++i) {
      const auto& r = rois[i];
      if (r.id != static_cast<int>(i) + 1) throw Error("RoI ids must be 1..k in order");
      if (!(0 <= r.x_lo && r.x_lo < r.x_hi && r.x_hi <= frame_width && 0 <= r.y_lo && r.y_lo < r.y_hi &&
            r.y_hi <= frame_height)) {
        throw Error("RoI " + std::to_string(r.id) + " lies outside the frame");
      }
    }
  }
  bool operator==(const RoISet&) const = default;
};

inline nlohmann::json to_json(const RoISet& s) {
  nlohmann::json j;
  j["version"] = RoISet::kVersion;
  j["k"] = s.k();
  j["frame_width"] = s.frame_width;
  j["frame_height"] = s.frame_height;
  j["source_hash"] = s.source_hash;
  j["rois"] = nlohmann::json::array();
  for (const auto& r : s.rois) {
    j["rois"].push_back({{"id", r.id}, {"x_lo", r.x_lo}, {"y_lo", r.y_lo}, {"x_hi", r.x_hi}, {"y_hi", r.y_hi}});
  }
  return j;
}

inline RoISet roiset_from_json(const nlohmann::json& j) {
  RoISet s;
  try {
    if (j.at("version").get<int>() != RoISet::kVersion) throw Error("unsupported RoI file version");
    s.frame_width = j.at("frame_width").get<int>();
    s.frame_height = j.at("frame_height").get<int>();
    s.source_hash = j.value("source_hash", std::string());
    for (const auto& r : j.at("rois")) {
      s.rois.push_back({r.at("id").get<int>(), r.at("x_lo").get<int>(), r.at("y_lo").get<int>(),
                        r.at("x_hi").get<int>(), r.at("y_hi").get<int>()});
    }
    if (j.at("k").get<int>() != s.k()) throw Error("RoI file: k does not match region count");
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("RoI file: ") + e.what());
  }
  s.validate();
  return s;
}

inline void save_roiset(const std::filesystem::path& path, const RoISet& s) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << to_json(s).dump(2) << '\n';
}

inline RoISet load_roiset(const std::filesystem::path& path) {
  try {
    return roiset_from_json(nlohmann::json::parse(read_text_file(path.string())));
  } catch (const nlohmann::json::exception& e) {
    throw Error("RoI file '" + path.string() + "': " + e.what());
  }
}

/// Equal-weight average of the day-hint mean map and the night-hint mean map; a class with
/// no pairs is left out.
inline DeltaMap composite_map(const std::vector<RainPeriodHint>& hints, const FrameSource& source,
                              double interval_s = 5.0) {
  PairSampler sampler(source, interval_s);
  MeanAccumulator day, night;
  for (std::size_t k = 0; k < sampler.size(); ++k) {
    auto t = sampler.tick_time(k);
    const RainPeriodHint* hit = nullptr;
    for (const auto& h : hints) {
      if (h.start <= t && t <= h.end) {
        hit = &h;
        break;
      }
    }
    if (!hit) continue;
    auto map = delta_map(sampler.pair(k));
    (hit->light == LightClass::day ? day : night).add(map);
  }
  if (day.count() == 0 && night.count() == 0) throw Error("no rain hint overlaps the stream");
  if (night.count() == 0) return day.mean();
  if (day.count() == 0) return night.mean();
  auto d = day.mean();
  auto n = night.mean();
  for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] = 0.5 * (d.values[i] + n.values[i]);
  return d;
}

inline constexpr double kWeakThreshold = 0.15;

inline std::vector<WeightedPoint> filter_weak(const DeltaMap& map, double tau_weak = kWeakThreshold) {
  std::vector<WeightedPoint> pts;
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      double v = map.at(x, y);
      if (v >= tau_weak && v > 0.0) pts.push_back({static_cast<double>(x), static_cast<double>(y), v});
    }
  }
  if (pts.empty()) throw Error("no strong reflections; provide more/longer rain hints");
  return pts;
}

struct Centroid {
  double x = 0;
  double y = 0;
};

struct KMeansResult {
  std::vector<int> assignment;
  std::vector<Centroid> centroids;
  std::vector<double> objective_history;  // after each assignment step
  int iterations = 0;

  double objective() const { return objective_history.empty() ? 0.0 : objective_history.back(); }
};

struct KMeansOptions {
  int max_iterations = 100;
  int restarts = 1;
};

namespace detail {

inline double sq_dist(const WeightedPoint& p, const Centroid& c) {
  double dx = p.x - c.x, dy = p.y - c.y;
  return dx * dx + dy * dy;
}

inline KMeansResult kmeans_once(const std::vector<WeightedPoint>& pts, int k, std::mt19937_64& rng,
                                int max_iterations) {
  const std::size_t n = pts.size();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](const std::vector<double>& mass) -> std::size_t {
    double total = 0;
    for (double m : mass) total += m;
    if (!(total > 0)) return n;
    double r = unit(rng) * total;
    for (std::size_t i = 0; i < n; ++i) {
      r -= mass[i];
      if (r < 0 && mass[i] > 0) return i;
    }
    for (std::size_t i = n; i-- > 0;) {
      if (mass[i] > 0) return i;
    }
    return n;
  };

  // weighted k-means++
  std::vector<Centroid> centers;
  std::vector<double> mass(n), d2(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);
  for (std::size_t i = 0; i < n; ++i) mass[i] = pts[i].w;
  while (static_cast<int>(centers.size()) < k) {
    std::size_t idx = pick(mass);
    if (idx == n) {  // remaining points coincide with existing centers
      idx = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
    }
    chosen[idx] = true;
    centers.push_back({pts[idx].x, pts[idx].y});
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(pts[i], centers.back()));
      mass[i] = pts[i].w * d2[i];
    }
  }

  KMeansResult res;
  res.assignment.assign(n, -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    double obj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq_dist(pts[i], centers[0]);
      for (int c = 1; c < k; ++c) {
        double d = sq_dist(pts[i], centers[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (res.assignment[i] != best) {
        res.assignment[i] = best;
        changed = true;
      }
      obj += pts[i].w * bd;
    }
    res.objective_history.push_back(obj);
    res.iterations = it + 1;
    if (!changed && it > 0) break;
    std::vector<double> sw(k, 0.0), sx(k, 0.0), sy(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      int c = res.assignment[i];
      sw[c] += pts[i].w;
      sx[c] += pts[i].w * pts[i].x;
      sy[c] += pts[i].w * pts[i].y;
    }
    for (int c = 0; c < k; ++c) {
      if (sw[c] > 0) centers[c] = {sx[c] / sw[c], sy[c] / sw[c]};
    }
  }
  res.centroids = std::move(centers);
  return res;
}

}  // namespace detail

/// Lloyd iterations on pixel coordinates with weights in both the centroid update and the
/// objective sum(w * dist^2). Seeded weighted k-means++ initialization; with restarts > 1 the
/// lowest-objective run wins.
inline KMeansResult weighted_kmeans(const std::vector<WeightedPoint>& pts, int k, std::uint64_t seed,
                                    const KMeansOptions& opt = {}) {
  if (k < 1) throw Error("weighted_kmeans: k must be at least 1");
  if (static_cast<std::size_t>(k) > pts.size()) throw Error("weighted_kmeans: k exceeds the number of points");
  std::mt19937_64 rng(seed);
  KMeansResult best;
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    auto res = detail::kmeans_once(pts, k, rng, opt.max_iterations);
    if (r == 0 || res.objective() < best.objective()) best = std::move(res);
  }
  return best;
}

inline constexpr double kRoiPercentileLo = 10.0;
inline constexpr double kRoiPercentileHi = 90.0;

namespace detail {

/// Nearest-rank percentile of a sorted list: element at rank ceil(p/100 * n), 1-based.
inline double nearest_rank(const std::vector<double>& sorted, double p) {
  auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

}  // namespace detail

/// Box spanning the p_lo..p_hi nearest-rank percentiles of member coordinates on each axis.
inline RoI cluster_bbox(const std::vector<WeightedPoint>& members, double p_lo = kRoiPercentileLo,
                        double p_hi = kRoiPercentileHi) {
  if (members.empty()) throw Error("cluster_bbox: empty cluster");
  std::vector<double> xs, ys;
  for (const auto& p : members) {
    xs.push_back(p.x);
    ys.push_back(p.y);
  }
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  RoI r;
  r.x_lo = static_cast<int>(detail::nearest_rank(xs, p_lo));
  r.x_hi = static_cast<int>(detail::nearest_rank(xs, p_hi)) + 1;
  r.y_lo = static_cast<int>(detail::nearest_rank(ys, p_lo));
  r.y_hi = static_cast<int>(detail::nearest_rank(ys, p_hi)) + 1;
  return r;
}

struct AutoRoiOptions {
  int k = 2;
  std::uint64_t seed = 0;
  double tau_weak = kWeakThreshold;
  double interval_s = 5.0;
  KMeansOptions kmeans{100, 5};
};

/// Clusters of the weak-filtered composite map, boxed and ordered by descending total weight.
inline RoISet rois_from_map(const DeltaMap& composite, const AutoRoiOptions& opt) {
  if (opt.k < 1 || opt.k > RoISet::kMaxRegions) throw Error("k must be between 1 and 8");
  auto pts = filter_weak(composite, opt.tau_weak);
  auto km = weighted_kmeans(pts, opt.k, opt.seed, opt.kmeans);
  std::vector<std::vector<WeightedPoint>> members(opt.k);
  std::vector<double> weight(opt.k, 0.0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    members[km.assignment[i]].push_back(pts[i]);
    weight[km.assignment[i]] += pts[i].w;
  }
  std::vector<int> order(opt.k);
  for (int c = 0; c < opt.k; ++c) order[c] = c;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return weight[a] > weight[b]; });
  RoISet set;
  set.frame_width = composite.width;
  set.frame_height = composite.height;
  for (int c : order) {
    if (members[c].empty()) throw Error("k-means produced an empty cluster; lower k");
    auto r = cluster_bbox(members[c]);
    r.id = static_cast<int>(set.rois.size()) + 1;
    set.rois.push_back(r);
  }
  Hasher h;
  h.value(opt.k).value(opt.seed).value(opt.tau_weak);
  h.bytes(composite.values.data(), composite.values.size() * sizeof(double));
  set.source_hash = h.hex();
  set.validate();
  return set;
}

inline RoISet auto_roi(const std::vector<RainPeriodHint>& hints, const FrameSource& source,
                       const AutoRoiOptions& opt) {
  auto composite = composite_map(hints, source, opt.interval_s);
  auto set = rois_from_map(composite, opt);
  Hasher h;
  h.str(set.source_hash).str(source.manifest().video_id);
  for (const auto& hint : hints) {
    h.str(format_timestamp(hint.start)).str(format_timestamp(hint.end)).str(to_string(hint.light));
  }
  set.source_hash = h.hex();
  return set;
}

}  // namespace rainsense
