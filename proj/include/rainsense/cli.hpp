// Command-line entry point: autoroi, extract, train, infer, evaluate, schedule, synth.
//
// Exit codes: 0 ok, 1 domain error (one-line cause on stderr), 2 usage error.
#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rainsense/autoroi.hpp"
#include "rainsense/irrigation.hpp"
#include "rainsense/model.hpp"
#include "rainsense/pipeline.hpp"
#include "rainsense/rainfall.hpp"
#include "rainsense/synth.hpp"

namespace rainsense {

/// Every tunable constant and file path of a run, in one auditable place. Command-line flags
/// override values loaded from a JSON config file.
struct PipelineConfig {
  std::optional<std::string> manifest, rois, detector, estimator, gauge, adjustments, et_source, zones;
  std::optional<double> detector_threshold;  // unset: use the threshold stored in the detector
  double tau_weak = kWeakThreshold;
  double tau_high = kHighChangeThreshold;
  double tau_bright = kBrightThreshold;
  double interval_s = 5.0;
  double tip_mm = kTipMm;
  int utc_offset_minutes = 0;
  std::uint64_t seed = 0;

  void validate() const {
    auto unit = [](double v, const char* name) {
      if (!(v >= 0 && v <= 1)) throw Error(std::string("config: ") + name + " must lie in [0,1]");
    };
    if (detector_threshold) unit(*detector_threshold, "detector_threshold");
    unit(tau_weak, "tau_weak");
    unit(tau_high, "tau_high");
    unit(tau_bright, "tau_bright");
    if (!(interval_s > 0)) throw Error("config: interval_s must be positive");
    if (!(tip_mm > 0)) throw Error("config: tip_mm must be positive");
  }

  /// Referenced input files must exist when the run starts.
  void check_files() const {
    for (const auto* p : {&manifest, &rois, &detector, &estimator, &gauge, &adjustments, &zones}) {
      if (*p && !std::filesystem::exists(**p)) throw Error("file not found: " + **p);
    }
    if (et_source && et_source->rfind("http://", 0) != 0 && !std::filesystem::exists(*et_source)) {
      throw Error("file not found: " + *et_source);
    }
  }

  FeatureThresholds thresholds() const { return {tau_high, tau_bright}; }
  std::chrono::minutes utc_offset() const { return std::chrono::minutes(utc_offset_minutes); }
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json j;
  auto put = [&](const char* k, const std::optional<std::string>& v) { j[k] = v ? nlohmann::json(*v) : nlohmann::json(); };
  put("manifest", c.manifest);
  put("rois", c.rois);
  put("detector", c.detector);
  put("estimator", c.estimator);
  put("gauge", c.gauge);
  put("adjustments", c.adjustments);
  put("et_source", c.et_source);
  put("zones", c.zones);
  j["detector_threshold"] = c.detector_threshold ? nlohmann::json(*c.detector_threshold) : nlohmann::json();
  j["tau_weak"] = c.tau_weak;
  j["tau_high"] = c.tau_high;
  j["tau_bright"] = c.tau_bright;
  j["interval_s"] = c.interval_s;
  j["tip_mm"] = c.tip_mm;
  j["utc_offset_minutes"] = c.utc_offset_minutes;
  j["seed"] = c.seed;
  return j;
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    auto get = [&](const char* k, std::optional<std::string>& v) {
      if (j.contains(k) && !j[k].is_null()) v = j[k].get<std::string>();
    };
    get("manifest", c.manifest);
    get("rois", c.rois);
    get("detector", c.detector);
    get("estimator", c.estimator);
    get("gauge", c.gauge);
    get("adjustments", c.adjustments);
    get("et_source", c.et_source);
    get("zones", c.zones);
    if (j.contains("detector_threshold") && !j["detector_threshold"].is_null()) {
      c.detector_threshold = j["detector_threshold"].get<double>();
    }
    c.tau_weak = j.value("tau_weak", c.tau_weak);
    c.tau_high = j.value("tau_high", c.tau_high);
    c.tau_bright = j.value("tau_bright", c.tau_bright);
    c.interval_s = j.value("interval_s", c.interval_s);
    c.tip_mm = j.value("tip_mm", c.tip_mm);
    c.utc_offset_minutes = j.value("utc_offset_minutes", c.utc_offset_minutes);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace cli_detail {

inline std::ofstream open_out(const std::string& path) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path + "'");
  return in;
}

inline const std::string& need(const std::optional<std::string>& v, const char* flag) {
  if (!v) throw Error(std::string("missing required input ") + flag);
  return *v;
}

inline std::vector<RainLabel> labels_from_gauge(const PipelineConfig& cfg, Timestamp from, Timestamp to) {
  auto in = open_in(*cfg.gauge);
  auto records = parse_gauge(in, cfg.tip_mm);
  std::vector<BoundaryAdjustment> adj;
  if (cfg.adjustments) adj = parse_adjustments(nlohmann::json::parse(read_text_file(*cfg.adjustments)));
  // marks m+1 .. cover minutes starting at from .. to
  return keyed_by_minute_start(minute_labels(records, adj, from + std::chrono::minutes(1), to + std::chrono::minutes(1)));
}

/// Streams a manifest through features and both models; calls `on_minute` per prediction.
template <typename F>
void run_inference(const PipelineConfig& cfg, const MlpModel& det, const MlpModel& est, F&& on_minute) {
  auto manifest = load_manifest(need(cfg.manifest, "--manifest"));
  auto rois = load_roiset(need(cfg.rois, "--rois"));
  if (det.input_dim() != rois.k() * kVisualPerRoi + kAudioFeatureCount) {
    throw Error("detector expects " + std::to_string(det.input_dim()) + " features but the RoI set yields " +
                std::to_string(rois.k() * kVisualPerRoi + kAudioFeatureCount));
  }
  FrameSource frames(manifest);
  std::unique_ptr<AudioWindowSource> audio;
  if (manifest.audio_path) audio = std::make_unique<WavWindowSource>(*manifest.audio_path, manifest.start_time);
  ExtractOptions opt;
  opt.interval_s = cfg.interval_s;
  opt.thresholds = cfg.thresholds();
  MinuteExtractor ex(frames, audio.get(), rois, opt);
  ex.run([&](const MinuteFeature& m) { on_minute(predict_minute(det, est, m.minute, m.row())); });
}

/// Daily totals accumulated one minute at a time.
class DailyAccumulator {
 public:
  DailyAccumulator(double threshold, std::chrono::minutes offset) : threshold_(threshold), offset_(offset) {}
  void add(const MinutePrediction& p) {
    auto d = local_date(p.minute, offset_);
    auto& row = days_[d];
    row.date = d;
    if (p.p_rain >= threshold_) {
      row.total_mm += p.intensity_mm_per_min;
      ++row.raining_minutes;
    }
  }
  std::vector<DailyRainfall> days() const {
    std::vector<DailyRainfall> out;
    for (const auto& [d, r] : days_) out.push_back(r);
    return out;
  }

 private:
  double threshold_;
  std::chrono::minutes offset_;
  std::map<Date, DailyRainfall> days_;
};

}  // namespace cli_detail

/// Parses `args` (without the program name) and runs one subcommand.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"Rainfall estimation from camera video and audio, and irrigation scheduling", "rainsense"};
  app.require_subcommand(1);
  std::optional<std::string> config_path;
  app.add_option("--config", config_path, "pipeline config JSON");

  // flags shared by several subcommands
  std::optional<std::string> manifest, rois, det, est, gauge, adjustments, et, zones;
  std::optional<double> threshold, tau_weak, tau_high, tau_bright, interval;
  std::optional<int> utc_offset;
  std::optional<std::uint64_t> seed;

  auto* autoroi_cmd = app.add_subcommand("autoroi", "derive regions of interest from rain hints");
  std::string hints_path, out_path;
  int k = 2, restarts = 5;
  autoroi_cmd->add_option("--manifest", manifest, "stream manifest JSON");
  autoroi_cmd->add_option("--hints", hints_path, "rain period hints JSON")->required();
  autoroi_cmd->add_option("--k", k, "number of regions (1-8)");
  autoroi_cmd->add_option("--restarts", restarts, "k-means restarts");
  autoroi_cmd->add_option("--seed", seed);
  autoroi_cmd->add_option("--tau-weak", tau_weak);
  autoroi_cmd->add_option("--interval", interval, "pair sampling interval in seconds");
  autoroi_cmd->add_option("--out", out_path, "output RoI JSON")->required();

  auto* extract_cmd = app.add_subcommand("extract", "per-minute feature vectors as CSV");
  std::optional<std::string> labels_path;
  bool concurrent = false;
  extract_cmd->add_option("--manifest", manifest);
  extract_cmd->add_option("--rois", rois);
  extract_cmd->add_option("--labels", labels_path, "label CSV keyed by minute start");
  extract_cmd->add_option("--gauge", gauge, "tipping-bucket log; labels are derived from it");
  extract_cmd->add_option("--adjustments", adjustments, "event boundary adjustments JSON");
  extract_cmd->add_option("--interval", interval);
  extract_cmd->add_option("--tau-high", tau_high);
  extract_cmd->add_option("--tau-bright", tau_bright);
  extract_cmd->add_flag("--concurrent", concurrent, "decode frames on a separate thread");
  extract_cmd->add_option("--out", out_path)->required();

  auto* train_cmd = app.add_subcommand("train", "train the detector or estimator");
  std::string task_name, features_path;
  std::optional<std::string> val_path;
  TrainConfig tc;
  bool complete_only = false, tune = false;
  train_cmd->add_option("--task", task_name, "detector | estimator")->required();
  train_cmd->add_option("--features", features_path, "labeled feature CSV")->required();
  train_cmd->add_option("--val", val_path, "labeled validation CSV (default: last 20% of --features)");
  train_cmd->add_option("--out", out_path)->required();
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--epochs", tc.epochs);
  train_cmd->add_option("--lr", tc.learning_rate);
  train_cmd->add_option("--batch", tc.batch_size);
  train_cmd->add_option("--patience", tc.patience);
  train_cmd->add_option("--class-weight", tc.class_weight, "positive class weight; 0 = inverse prevalence");
  train_cmd->add_flag("--complete-only", complete_only, "train on complete minutes only");
  train_cmd->add_flag("--tune-threshold", tune, "pick the detector threshold maximizing validation F1");

  auto* infer_cmd = app.add_subcommand("infer", "per-minute predictions and daily totals for a stream");
  std::string minutes_out, daily_out;
  infer_cmd->add_option("--manifest", manifest);
  infer_cmd->add_option("--rois", rois);
  infer_cmd->add_option("--det", det);
  infer_cmd->add_option("--est", est);
  infer_cmd->add_option("--threshold", threshold);
  infer_cmd->add_option("--interval", interval);
  infer_cmd->add_option("--utc-offset", utc_offset, "minutes east of UTC for daily totals");
  infer_cmd->add_option("--out-minutes", minutes_out)->required();
  infer_cmd->add_option("--out-daily", daily_out)->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "detection and estimation metrics");
  std::string pred_path;
  std::optional<std::string> report_path;
  eval_cmd->add_option("--pred", pred_path, "per-minute prediction CSV")->required();
  eval_cmd->add_option("--labels", labels_path);
  eval_cmd->add_option("--gauge", gauge);
  eval_cmd->add_option("--adjustments", adjustments);
  eval_cmd->add_option("--threshold", threshold);
  eval_cmd->add_option("--utc-offset", utc_offset);
  eval_cmd->add_option("--out", report_path, "per-day report CSV");

  auto* sched_cmd = app.add_subcommand("schedule", "irrigation plan from rainfall and ET");
  std::optional<std::string> daily_in, history, from_s, to_s;
  std::vector<std::string> stops;
  bool carryover = false;
  sched_cmd->add_option("--daily", daily_in, "daily rainfall CSV (instead of running inference)");
  sched_cmd->add_option("--manifest", manifest);
  sched_cmd->add_option("--rois", rois);
  sched_cmd->add_option("--det", det);
  sched_cmd->add_option("--est", est);
  sched_cmd->add_option("--threshold", threshold);
  sched_cmd->add_option("--et", et, "ET JSON file or http:// URL");
  sched_cmd->add_option("--zones", zones, "zone config JSON");
  sched_cmd->add_option("--from", from_s, "first date (default: first rainfall date)");
  sched_cmd->add_option("--to", to_s, "last date (default: last rainfall date)");
  sched_cmd->add_flag("--carryover", carryover, "bank rain surplus as credit, capped at one day's ET");
  sched_cmd->add_option("--history", history, "append simulated valve events to this CSV");
  sched_cmd->add_option("--stop", stops, "manual stop ZONE@TIMESTAMP (repeatable)");
  sched_cmd->add_option("--out", out_path)->required();

  auto* synth_cmd = app.add_subcommand("synth", "render a synthetic scene with exact labels");
  std::string spec_path, profile_path, video_id = "synthetic";
  synth_cmd->add_option("--spec", spec_path, "scene JSON")->required();
  synth_cmd->add_option("--profile", profile_path, "rain profile JSON")->required();
  synth_cmd->add_option("--video-id", video_id);
  synth_cmd->add_option("--out", out_path, "output directory")->required();

  std::vector<std::string> argv{"rainsense"};
  argv.insert(argv.end(), args.begin(), args.end());
  std::vector<const char*> cargs;
  for (const auto& a : argv) cargs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return 2;
  }

  try {
    PipelineConfig cfg;
    if (config_path) cfg = config_from_json(nlohmann::json::parse(read_text_file(*config_path)));
    auto over = [](auto& dst, const auto& src) {
      if (src) dst = src;
    };
    over(cfg.manifest, manifest);
    over(cfg.rois, rois);
    over(cfg.detector, det);
    over(cfg.estimator, est);
    over(cfg.gauge, gauge);
    over(cfg.adjustments, adjustments);
    over(cfg.et_source, et);
    over(cfg.zones, zones);
    over(cfg.detector_threshold, threshold);
    if (tau_weak) cfg.tau_weak = *tau_weak;
    if (tau_high) cfg.tau_high = *tau_high;
    if (tau_bright) cfg.tau_bright = *tau_bright;
    if (interval) cfg.interval_s = *interval;
    if (utc_offset) cfg.utc_offset_minutes = *utc_offset;
    if (seed) cfg.seed = *seed;
    cfg.validate();
    cfg.check_files();

    auto* sub = app.get_subcommands().front();
    Hasher h;
    h.str(sub->get_name());
    h.str(to_json(cfg).dump());
    err << "config_hash=" << h.hex() << " seed=" << cfg.seed << '\n';

    if (sub == autoroi_cmd) {
      auto m = load_manifest(need(cfg.manifest, "--manifest"));
      FrameSource source(m);
      AutoRoiOptions opt;
      opt.k = k;
      opt.seed = cfg.seed;
      opt.tau_weak = cfg.tau_weak;
      opt.interval_s = cfg.interval_s;
      opt.kmeans.restarts = restarts;
      auto set = auto_roi(load_hints(hints_path), source, opt);
      save_roiset(out_path, set);
      err << "wrote " << set.k() << " regions to " << out_path << '\n';
    } else if (sub == extract_cmd) {
      auto m = load_manifest(need(cfg.manifest, "--manifest"));
      auto set = load_roiset(need(cfg.rois, "--rois"));
      ExtractOptions opt;
      opt.interval_s = cfg.interval_s;
      opt.thresholds = cfg.thresholds();
      opt.concurrent = concurrent;
      opt.log = &err;
      auto minutes = extract_minutes(m, set, opt);
      FeatureTable table{set.k(), {}};
      for (const auto& mf : minutes) table.rows.push_back(to_row(mf));
      std::optional<std::vector<RainLabel>> labels;
      if (labels_path) {
        auto in = open_in(*labels_path);
        labels = read_labels_csv(in);
      } else if (cfg.gauge) {
        labels = labels_from_gauge(cfg, m.start_time, from_seconds(m.start_time, m.duration));
      }
      if (labels) {
        std::map<Timestamp, RainLabel> by_minute;
        for (const auto& l : *labels) by_minute[l.minute] = l;
        std::size_t missing = 0;
        for (auto& r : table.rows) {
          auto it = by_minute.find(r.minute);
          if (it == by_minute.end()) {
            ++missing;
            continue;
          }
          r.is_raining = it->second.is_raining;
          r.intensity_mm_per_min = it->second.intensity_mm_per_min;
        }
        if (missing) throw Error(std::to_string(missing) + " feature minutes have no label");
      }
      auto o = open_out(out_path);
      write_feature_csv(o, table);
      err << "wrote " << table.rows.size() << " minutes to " << out_path << '\n';
    } else if (sub == train_cmd) {
      auto task = parse_task(task_name);
      auto in = open_in(features_path);
      auto train_rows = make_examples(read_feature_csv(in), task, complete_only);
      std::vector<Example> val_rows;
      if (val_path) {
        auto vin = open_in(*val_path);
        val_rows = make_examples(read_feature_csv(vin), task, complete_only);
      } else {
        auto s = sequential_split(train_rows, 0.8, 0.2, 0.0);
        train_rows = s.train;
        val_rows = s.val;
      }
      if (val_rows.empty()) throw Error("empty validation set");
      tc.seed = cfg.seed;
      auto res = train(task, train_rows, val_rows, tc);
      if (task == Task::detector && tune) res.model.set_threshold(tune_threshold(res.model, val_rows));
      save_model(out_path, res.model);
      err << "trained " << to_string(task) << " (" << res.model.size() << " parameters), best epoch " << res.best_epoch
          << '\n';
    } else if (sub == infer_cmd) {
      auto dm = load_model(need(cfg.detector, "--det"));
      auto em = load_model(need(cfg.estimator, "--est"));
      double th = cfg.detector_threshold.value_or(dm.threshold());
      DailyAccumulator daily(th, cfg.utc_offset());
      auto mo = open_out(minutes_out);
      write_predictions_csv(mo, {});
      run_inference(cfg, dm, em, [&](const MinutePrediction& p) {
        write_predictions_csv_row(mo, p);
        daily.add(p);
      });
      auto d = open_out(daily_out);
      write_daily_csv(d, daily.days());
    } else if (sub == eval_cmd) {
      auto pin = open_in(pred_path);
      auto preds = read_predictions_csv(pin);
      if (preds.empty()) throw Error("no predictions");
      std::vector<RainLabel> labels;
      if (labels_path) {
        auto lin = open_in(*labels_path);
        labels = read_labels_csv(lin);
      } else if (cfg.gauge) {
        labels = labels_from_gauge(cfg, preds.front().minute, preds.back().minute + std::chrono::minutes(1));
      } else {
        throw Error("missing required input --labels or --gauge");
      }
      auto report = evaluate(preds, labels, cfg.detector_threshold.value_or(0.5), cfg.utc_offset());
      write_report_summary(out, report);
      if (report_path) {
        auto r = open_out(*report_path);
        write_report_csv(r, report);
      }
    } else if (sub == sched_cmd) {
      auto settings = load_irrigation_settings(need(cfg.zones, "--zones"));
      if (carryover) settings.carryover = true;
      std::vector<DailyRainfall> rain;
      if (daily_in) {
        auto din = open_in(*daily_in);
        rain = read_daily_csv(din);
      } else {
        auto dm = load_model(need(cfg.detector, "--det"));
        auto em = load_model(need(cfg.estimator, "--est"));
        DailyAccumulator daily(cfg.detector_threshold.value_or(dm.threshold()), settings.utc_offset);
        run_inference(cfg, dm, em, [&](const MinutePrediction& p) { daily.add(p); });
        rain = daily.days();
      }
      if (rain.empty() && (!from_s || !to_s)) throw Error("no rainfall days; pass --from and --to");
      Date from = from_s ? parse_date(*from_s) : rain.front().date;
      Date to = to_s ? parse_date(*to_s) : rain.back().date;
      auto fetched = fetch_et(need(cfg.et_source, "--et"), from, to);
      for (const auto& d : fetched.missing) err << "warning: no ET for " << format_date(d) << "; date skipped\n";
      std::vector<StopOverride> overrides;
      for (const auto& s : stops) {
        auto at = s.find('@');
        if (at == std::string::npos) throw Error("--stop expects ZONE@TIMESTAMP, got '" + s + "'");
        overrides.push_back({s.substr(0, at), parse_timestamp(s.substr(at + 1))});
      }
      std::vector<IrrigationPlan> plans;
      for (const auto& z : settings.zones) {
        auto p = plan_zone(fetched.records, rain, z, settings);
        plans.insert(plans.end(), p.begin(), p.end());
      }
      auto result = actuate(plans, settings, overrides);
      auto o = open_out(out_path);
      write_plans_csv(o, result.plans);
      if (history) append_history(*history, result.events);
    } else if (sub == synth_cmd) {
      auto spec = scene_from_json(nlohmann::json::parse(read_text_file(spec_path)));
      auto profile = profile_from_json(nlohmann::json::parse(read_text_file(profile_path)));
      SceneRenderer scene(spec, profile);
      auto g = gen_scene(scene, out_path, video_id);
      err << "wrote scene to " << g.manifest.parent_path().string() << '\n';
    }
    return 0;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace rainsense
