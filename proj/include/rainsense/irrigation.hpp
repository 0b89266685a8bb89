// Water-balance irrigation: IR = max(0, Kc * ET_loss - rain), zone run-times with a per-cycle
// cap, a simulated valve actuator, and water-saving accounting.
#pragma once

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rainsense/common.hpp"
#include "rainsense/rainfall.hpp"

namespace rainsense {

struct EtRecord {
  Date date{};
  double et_loss_mm = 0;
  std::string station_id;
};

struct EtFetchResult {
  std::vector<EtRecord> records;  // one per date in range, ascending
  std::vector<Date> missing;
};

/// Payload: `[{"date":"YYYY-MM-DD","et_loss_mm":x,"station_id":"s"}]`. Records outside
/// [from, to] are ignored; a repeated date keeps the last record.
inline EtFetchResult parse_et(const std::string& payload, Date from, Date to) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(payload);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed ET payload: ") + e.what());
  }
  if (!j.is_array()) throw Error("malformed ET payload: expected a JSON array");
  std::map<Date, EtRecord> by_date;
  for (const auto& item : j) {
    EtRecord r;
    try {
      r.date = parse_date(item.at("date").get<std::string>());
      r.et_loss_mm = item.at("et_loss_mm").get<double>();
      r.station_id = item.value("station_id", std::string());
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("malformed ET payload: ") + e.what());
    }
    if (!std::isfinite(r.et_loss_mm) || r.et_loss_mm < 0) {
      throw Error("invalid ET for " + format_date(r.date) + ": " + format_number(r.et_loss_mm));
    }
    if (r.date < from || r.date > to) continue;
    by_date[r.date] = r;
  }
  EtFetchResult out;
  for (Date d = from; d <= to; d += std::chrono::days(1)) {
    auto it = by_date.find(d);
    if (it == by_date.end()) {
      out.missing.push_back(d);
    } else {
      out.records.push_back(it->second);
    }
  }
  return out;
}

/// `source` is a local file path or an `http://host[:port]/path` URL answering GET.
inline EtFetchResult fetch_et(const std::string& source, Date from, Date to) {
  if (source.rfind("http://", 0) == 0) {
    auto rest = source.substr(7);
    auto slash = rest.find('/');
    std::string host = rest.substr(0, slash);
    std::string path = slash == std::string::npos ? "/" : rest.substr(slash);
    httplib::Client client("http://" + host);
    client.set_connection_timeout(5);
    client.set_read_timeout(10);
    auto res = client.Get(path);
    if (!res) throw Error("ET source unreachable: " + source);
    if (res->status != 200) throw Error("ET source returned HTTP " + std::to_string(res->status));
    return parse_et(res->body, from, to);
  }
  if (!std::filesystem::exists(source)) throw Error("ET source unreachable: no file '" + source + "'");
  return parse_et(read_text_file(source), from, to);
}

/// Crop coefficients per (plant, soil); unknown pairs default to 1.0.
class CropCoefficients {
 public:
  void set(const std::string& plant, const std::string& soil, double k) {
    if (!(k >= 0) || !std::isfinite(k)) throw Error("crop coefficient must be finite and >= 0");
    table_[{plant, soil}] = k;
  }
  double get(const std::string& plant, const std::string& soil) const {
    auto it = table_.find({plant, soil});
    return it == table_.end() ? 1.0 : it->second;
  }

 private:
  std::map<std::pair<std::string, std::string>, double> table_;
};

inline const std::vector<std::string>& plant_types() {
  static const std::vector<std::string> v{"turfgrass", "shrubs", "trees", "groundcover", "flowers", "vegetables"};
  return v;
}
inline const std::vector<std::string>& soil_types() {
  static const std::vector<std::string> v{"sand", "loam", "clay"};
  return v;
}

struct ZoneConfig {
  std::string zone_id;
  std::string plant_type = "turfgrass";
  std::string soil_type = "loam";
  double precipitation_rate = 12.0;  // mm/hour of the sprinkler heads
  double max_runtime_min = 60.0;
  double area_m2 = 0.0;

  void validate() const {
    if (!(precipitation_rate > 0)) throw Error("zone " + zone_id + ": precipitation_rate must be positive");
    if (!(max_runtime_min > 0)) throw Error("zone " + zone_id + ": max_runtime_min must be positive");
    auto known = [](const std::vector<std::string>& v, const std::string& s) {
      return std::find(v.begin(), v.end(), s) != v.end();
    };
    if (!known(plant_types(), plant_type)) throw Error("zone " + zone_id + ": unknown plant type '" + plant_type + "'");
    if (!known(soil_types(), soil_type)) throw Error("zone " + zone_id + ": unknown soil type '" + soil_type + "'");
  }
};

struct IrrigationSettings {
  std::vector<ZoneConfig> zones;
  CropCoefficients coefficients;
  std::chrono::minutes utc_offset{0};
  std::chrono::minutes start_of_day{5 * 60};  // local time irrigation cycles begin
  bool carryover = false;
};

inline IrrigationSettings parse_irrigation_settings(const nlohmann::json& j) {
  IrrigationSettings s;
  try {
    for (const auto& z : j.at("zones")) {
      ZoneConfig zc;
      zc.zone_id = z.at("zone_id").get<std::string>();
      zc.plant_type = z.value("plant_type", zc.plant_type);
      zc.soil_type = z.value("soil_type", zc.soil_type);
      zc.precipitation_rate = z.at("precipitation_rate").get<double>();
      zc.max_runtime_min = z.value("max_runtime_min", zc.max_runtime_min);
      zc.area_m2 = z.value("area_m2", 0.0);
      zc.validate();
      s.zones.push_back(zc);
    }
    if (j.contains("crop_coefficients")) {
      for (const auto& c : j["crop_coefficients"]) {
        s.coefficients.set(c.at("plant_type").get<std::string>(), c.at("soil_type").get<std::string>(),
                           c.at("coefficient").get<double>());
      }
    }
    s.utc_offset = std::chrono::minutes(j.value("utc_offset_minutes", 0));
    s.start_of_day = std::chrono::minutes(j.value("start_minute_of_day", 5 * 60));
    s.carryover = j.value("carryover", false);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("zone config: ") + e.what());
  }
  if (s.zones.empty()) throw Error("zone config: no zones");
  return s;
}

inline IrrigationSettings load_irrigation_settings(const std::filesystem::path& path) {
  try {
    return parse_irrigation_settings(nlohmann::json::parse(read_text_file(path.string())));
  } catch (const nlohmann::json::exception& e) {
    throw Error("zone config '" + path.string() + "': " + e.what());
  }
}

inline double irrigation_requirement(const EtRecord& et, const DailyRainfall& rain, const ZoneConfig& zone,
                                     const CropCoefficients& kc = {}) {
  if (et.date != rain.date) throw Error("ET and rainfall records refer to different dates");
  return std::max(0.0, kc.get(zone.plant_type, zone.soil_type) * et.et_loss_mm - rain.total_mm);
}

enum class PlanStatus { planned, executed, skipped };

inline std::string to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::planned: return "planned";
    case PlanStatus::executed: return "executed";
    case PlanStatus::skipped: return "skipped";
  }
  return "?";
}

struct IrrigationPlan {
  std::string zone_id;
  Date date{};
  double ir_mm = 0;         // requirement for this date
  double runtime_min = 0;   // this cycle, after the cap
  double deferred_min = 0;  // pushed to the next cycle
  PlanStatus status = PlanStatus::planned;

  double applied_mm(const ZoneConfig& zone) const { return runtime_min * zone.precipitation_rate / 60.0; }
};

inline double runtime_for(double ir_mm, const ZoneConfig& zone) { return 60.0 * ir_mm / zone.precipitation_rate; }

/// `carried_min` is run-time deferred from the previous cycle.
inline IrrigationPlan schedule(double ir_mm, const ZoneConfig& zone, Date date = {}, double carried_min = 0.0) {
  zone.validate();
  if (!(ir_mm >= 0)) throw Error("irrigation requirement must be >= 0");
  IrrigationPlan p{zone.zone_id, date, ir_mm, 0, 0, PlanStatus::planned};
  double total = runtime_for(ir_mm, zone) + carried_min;
  p.runtime_min = std::min(total, zone.max_runtime_min);
  p.deferred_min = total - p.runtime_min;
  if (p.runtime_min <= 0) p.status = PlanStatus::skipped;
  return p;
}

/// Daily plans for one zone, chaining deferred run-time. With carryover, a rain surplus is
/// banked as a credit (capped at that day's scaled ET) against the next day's requirement.
inline std::vector<IrrigationPlan> plan_zone(const std::vector<EtRecord>& et, const std::vector<DailyRainfall>& rain,
                                             const ZoneConfig& zone, const IrrigationSettings& settings) {
  std::map<Date, double> rain_by_date;
  for (const auto& r : rain) rain_by_date[r.date] += r.total_mm;
  std::vector<IrrigationPlan> plans;
  double deferred = 0, credit = 0;
  for (const auto& e : et) {
    DailyRainfall r{e.date, rain_by_date.count(e.date) ? rain_by_date[e.date] : 0.0, 0};
    double scaled_et = settings.coefficients.get(zone.plant_type, zone.soil_type) * e.et_loss_mm;
    double ir = irrigation_requirement(e, r, zone, settings.coefficients);
    if (settings.carryover) {
      double used = std::min(credit, ir);
      ir -= used;
      credit -= used;
      credit = std::min(credit + std::max(0.0, r.total_mm - scaled_et), scaled_et);
    }
    auto p = schedule(ir, zone, e.date, deferred);
    deferred = p.deferred_min;
    plans.push_back(p);
  }
  return plans;
}

inline void write_plans_csv(std::ostream& out, const std::vector<IrrigationPlan>& plans) {
  out << "zone_id,date,ir_mm,runtime_min,deferred_min,status\n";
  for (const auto& p : plans) {
    out << p.zone_id << ',' << format_date(p.date) << ',' << format_number(p.ir_mm) << ','
        << format_number(p.runtime_min) << ',' << format_number(p.deferred_min) << ',' << to_string(p.status) << '\n';
  }
}

enum class ValveAction { open, close, stop };

inline std::string to_string(ValveAction a) {
  switch (a) {
    case ValveAction::open: return "open";
    case ValveAction::close: return "close";
    case ValveAction::stop: return "stop";
  }
  return "?";
}

struct ValveEvent {
  Timestamp t{};
  std::string zone_id;
  Date plan_date{};
  ValveAction action = ValveAction::open;
  double delivered_mm = 0;  // on close/stop
  double deficit_mm = 0;    // on stop: planned but not delivered
};

/// Manual stop for a zone at a given instant.
struct StopOverride {
  std::string zone_id;
  Timestamp at{};
};

struct ActuationResult {
  std::vector<ValveEvent> events;
  std::vector<IrrigationPlan> plans;  // statuses updated
};

/// Simulated valves on one timeline. Runs on the same zone never overlap: a plan starts at its
/// local start-of-day or when the zone's previous run ends, whichever is later.
inline ActuationResult actuate(const std::vector<IrrigationPlan>& plans, const IrrigationSettings& settings,
                               const std::vector<StopOverride>& overrides = {}) {
  ActuationResult res;
  res.plans = plans;
  std::map<std::string, Timestamp> busy_until;
  std::map<std::string, const ZoneConfig*> zones;
  for (const auto& z : settings.zones) zones[z.zone_id] = &z;
  std::vector<std::size_t> order(plans.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return plans[a].date < plans[b].date; });
  for (std::size_t idx : order) {
    auto& plan = res.plans[idx];
    if (plan.status == PlanStatus::skipped || plan.runtime_min <= 0) {
      plan.status = PlanStatus::skipped;
      continue;
    }
    auto zit = zones.find(plan.zone_id);
    if (zit == zones.end()) throw Error("plan for unknown zone '" + plan.zone_id + "'");
    const auto& zone = *zit->second;
    Timestamp start = Timestamp(plan.date) + settings.start_of_day - settings.utc_offset;
    if (auto b = busy_until.find(plan.zone_id); b != busy_until.end()) start = std::max(start, b->second);
    Timestamp end = from_seconds(start, plan.runtime_min * 60.0);
    double planned_mm = plan.applied_mm(zone);
    std::optional<Timestamp> stop;
    for (const auto& o : overrides) {
      if (o.zone_id == plan.zone_id && o.at >= start && o.at < end && (!stop || o.at < *stop)) stop = o.at;
    }
    res.events.push_back({start, plan.zone_id, plan.date, ValveAction::open, 0, 0});
    if (stop) {
      double frac = seconds_between(start, *stop) / seconds_between(start, end);
      double delivered = planned_mm * frac;
      res.events.push_back({*stop, plan.zone_id, plan.date, ValveAction::stop, delivered, planned_mm - delivered});
      end = *stop;
    } else {
      res.events.push_back({end, plan.zone_id, plan.date, ValveAction::close, planned_mm, 0});
    }
    busy_until[plan.zone_id] = end;
    plan.status = PlanStatus::executed;
  }
  std::stable_sort(res.events.begin(), res.events.end(), [](const ValveEvent& a, const ValveEvent& b) { return a.t < b.t; });
  return res;
}

inline constexpr const char* kHistoryHeader = "time_utc,zone_id,plan_date,action,delivered_mm,deficit_mm";

inline std::string history_line(const ValveEvent& e) {
  return format_timestamp(e.t) + ',' + e.zone_id + ',' + format_date(e.plan_date) + ',' + to_string(e.action) + ',' +
         format_number(e.delivered_mm) + ',' + format_number(e.deficit_mm) + '\n';
}

/// Appends events to the history CSV, one flushed line per event; writes the header for a new file.
inline void append_history(const std::filesystem::path& path, const std::vector<ValveEvent>& events) {
  bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot append to history '" + path.string() + "'");
  if (fresh) out << kHistoryHeader << '\n' << std::flush;
  for (const auto& e : events) {
    auto line = history_line(e);
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.flush();
  }
}

struct DailyDepth {
  Date date{};
  double mm = 0;
};

inline constexpr double kLitersPerGallon = 3.785411784;

struct WaterSaving {
  double liters = 0;
  double gallons = 0;
};

/// Sum over dates of |a - b| mm times area (1 mm over 1 m^2 is 1 L). Dates missing on one side count as 0.
inline WaterSaving water_saving(const std::vector<DailyDepth>& ir_a, const std::vector<DailyDepth>& ir_b,
                                double area_m2) {
  if (!(area_m2 >= 0)) throw Error("irrigated area must be >= 0");
  std::map<Date, std::pair<double, double>> m;
  for (const auto& d : ir_a) m[d.date].first += d.mm;
  for (const auto& d : ir_b) m[d.date].second += d.mm;
  double mm = 0;
  for (const auto& [d, v] : m) mm += std::abs(v.first - v.second);
  WaterSaving w;
  w.liters = mm * area_m2;
  w.gallons = w.liters / kLitersPerGallon;
  return w;
}

}  // namespace rainsense
