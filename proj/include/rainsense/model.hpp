// Tiny dense networks over minute feature rows: input -> 6 ReLU -> 6 ReLU -> 1.
// The detector has a sigmoid head trained with (class-weighted) binary cross-entropy; the
// estimator has a linear head trained with mean squared error on raining minutes only.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rainsense/common.hpp"
#include "rainsense/features.hpp"
#include "rainsense/metrics.hpp"

namespace rainsense {

enum class Task { detector, estimator };

inline std::string to_string(Task t) { return t == Task::detector ? "detector" : "estimator"; }

inline Task parse_task(const std::string& s) {
  if (s == "detector") return Task::detector;
  if (s == "estimator") return Task::estimator;
  throw Error("task must be 'detector' or 'estimator', got '" + s + "'");
}

/// Per-feature standardization fitted on training rows.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  static NormStats identity(std::size_t dim) { return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)}; }

  /// Population mean/std; constant features get std 1.
  static NormStats fit(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw Error("cannot fit normalization on zero rows");
    std::size_t d = rows.front().size();
    NormStats s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < d; ++i) s.mean[i] += r[i];
    }
    for (auto& m : s.mean) m /= static_cast<double>(rows.size());
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < d; ++i) s.stddev[i] += (r[i] - s.mean[i]) * (r[i] - s.mean[i]);
    }
    for (auto& v : s.stddev) {
      v = std::sqrt(v / static_cast<double>(rows.size()));
      if (!(v > 1e-12)) v = 1.0;
    }
    return s;
  }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - mean[i]) / stddev[i];
    return z;
  }
};

class MlpModel {
 public:
  static constexpr int kHidden = 6;
  static constexpr int kSchemaVersion = 1;

  static std::size_t parameter_count(int input_dim) {
    return static_cast<std::size_t>(input_dim) * kHidden + kHidden + kHidden * kHidden + kHidden + kHidden + 1;
  }

  MlpModel() = default;
  MlpModel(int input_dim, Task task)
      : input_dim_(input_dim), task_(task), norm_(NormStats::identity(input_dim)),
        params_(parameter_count(input_dim), 0.0) {
    if (input_dim < 1) throw Error("model input_dim must be positive");
  }

  /// Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights, zero biases.
  static MlpModel init(int input_dim, Task task, std::uint64_t seed) {
    MlpModel m(input_dim, task);
    std::mt19937_64 rng(seed);
    auto fill = [&](std::size_t offset, std::size_t count, int fan_in) {
      double limit = std::sqrt(6.0 / fan_in);
      std::uniform_real_distribution<double> u(-limit, limit);
      for (std::size_t i = 0; i < count; ++i) m.params_[offset + i] = u(rng);
    };
    fill(m.w1(), static_cast<std::size_t>(kHidden) * input_dim, input_dim);
    fill(m.w2(), kHidden * kHidden, kHidden);
    fill(m.w3(), kHidden, kHidden);
    return m;
  }

  int input_dim() const { return input_dim_; }
  Task task() const { return task_; }
  std::size_t size() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  const NormStats& norm() const { return norm_; }
  void set_norm(NormStats n) {
    if (n.mean.size() != static_cast<std::size_t>(input_dim_) || n.stddev.size() != n.mean.size()) {
      throw Error("normalization stats do not match input_dim");
    }
    norm_ = std::move(n);
  }
  double threshold() const { return threshold_; }
  void set_threshold(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw Error("detector threshold must lie in [0,1]");
    threshold_ = t;
  }

  // Offsets of each block in the flat parameter vector.
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return static_cast<std::size_t>(kHidden) * input_dim_; }
  std::size_t w2() const { return b1() + kHidden; }
  std::size_t b2() const { return w2() + kHidden * kHidden; }
  std::size_t w3() const { return b2() + kHidden; }
  std::size_t b3() const { return w3() + kHidden; }

  struct Activations {
    std::array<double, kHidden> z1{}, h1{}, z2{}, h2{};
    double out_pre = 0;  // head pre-activation
    double out = 0;
  };

  /// Forward pass on an already standardized row.
  Activations activations(std::span<const double> z) const {
    if (z.size() != static_cast<std::size_t>(input_dim_)) {
      throw Error("feature row has " + std::to_string(z.size()) + " values, model expects " +
                  std::to_string(input_dim_));
    }
    const double* p = params_.data();
    Activations a;
    for (int j = 0; j < kHidden; ++j) {
      double s = p[b1() + j];
      const double* row = p + w1() + static_cast<std::size_t>(j) * input_dim_;
      for (int i = 0; i < input_dim_; ++i) s += row[i] * z[i];
      a.z1[j] = s;
      a.h1[j] = std::max(0.0, s);
    }
    for (int j = 0; j < kHidden; ++j) {
      double s = p[b2() + j];
      for (int i = 0; i < kHidden; ++i) s += p[w2() + j * kHidden + i] * a.h1[i];
      a.z2[j] = s;
      a.h2[j] = std::max(0.0, s);
    }
    double s = p[b3()];
    for (int i = 0; i < kHidden; ++i) s += p[w3() + i] * a.h2[i];
    a.out_pre = s;
    a.out = task_ == Task::detector ? 1.0 / (1.0 + std::exp(-s)) : s;
    return a;
  }

  double forward_standardized(std::span<const double> z) const { return activations(z).out; }

  /// Standardizes the raw feature row with the stored stats, then runs the network.
  double forward(std::span<const double> x) const { return forward_standardized(norm_.apply(x)); }

 private:
  int input_dim_ = 0;
  Task task_ = Task::detector;
  NormStats norm_;
  std::vector<double> params_;
  double threshold_ = 0.5;
};

enum class Loss { bce, mse };

inline Loss loss_for(Task t) { return t == Task::detector ? Loss::bce : Loss::mse; }

/// Raw feature row, target, and per-sample loss weight.
struct Example {
  std::vector<double> x;
  double y = 0;
  double weight = 1;
};

/// Mean weighted loss over the batch; accumulates the exact analytic gradient into `grad`
/// (resized to the parameter count) when given. BCE accepts soft labels in [0,1].
inline double loss_and_gradient(const MlpModel& model, std::span<const Example> batch, Loss loss,
                                std::vector<double>* grad = nullptr) {
  constexpr int H = MlpModel::kHidden;
  if (batch.empty()) throw Error("empty batch");
  if (loss == Loss::bce && model.task() != Task::detector) throw Error("binary cross-entropy needs a sigmoid head");
  if (grad) grad->assign(model.size(), 0.0);
  const auto p = model.params();
  const int d = model.input_dim();
  double total = 0;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    auto z = model.norm().apply(ex.x);
    auto a = model.activations(z);
    double dout;  // d(loss)/d(head pre-activation)
    if (loss == Loss::bce) {
      double s = a.out_pre;
      double softplus = s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
      total += ex.weight * (softplus - ex.y * s);
      dout = ex.weight * (a.out - ex.y);
    } else {
      double r = a.out - ex.y;
      total += ex.weight * r * r;
      dout = ex.weight * 2.0 * r;
      if (model.task() == Task::detector) dout *= a.out * (1.0 - a.out);
    }
    if (!grad) continue;
    auto& g = *grad;
    dout *= inv_n;
    g[model.b3()] += dout;
    std::array<double, H> dz2{};
    for (int i = 0; i < H; ++i) {
      g[model.w3() + i] += dout * a.h2[i];
      dz2[i] = a.z2[i] > 0 ? dout * p[model.w3() + i] : 0.0;
    }
    std::array<double, H> dh1{};
    for (int j = 0; j < H; ++j) {
      g[model.b2() + j] += dz2[j];
      for (int i = 0; i < H; ++i) {
        g[model.w2() + j * H + i] += dz2[j] * a.h1[i];
        dh1[i] += dz2[j] * p[model.w2() + j * H + i];
      }
    }
    for (int j = 0; j < H; ++j) {
      double dz1 = a.z1[j] > 0 ? dh1[j] : 0.0;
      if (dz1 == 0.0) continue;
      g[model.b1() + j] += dz1;
      for (int i = 0; i < d; ++i) g[model.w1() + static_cast<std::size_t>(j) * d + i] += dz1 * z[i];
    }
  }
  return total * inv_n;
}

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, const std::vector<double>& grad) {
    ++t_;
    double c1 = 1.0 - std::pow(kBeta1, t_);
    double c2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1 - kBeta1) * grad[i];
      v_[i] = kBeta2 * v_[i] + (1 - kBeta2) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  double lr_;
  int t_ = 0;
  std::vector<double> m_, v_;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 200;
  int batch_size = 64;
  std::uint64_t seed = 0;
  int patience = 50;           // epochs without validation improvement before stopping
  double class_weight = 0.0;   // detector positive weight; 0 selects inverse prevalence capped at 10
  double max_class_weight = 10.0;

  void validate() const {
    if (!(learning_rate > 0) || epochs < 1 || batch_size < 1 || patience < 1 || class_weight < 0) {
      throw Error("training hyperparameters must be positive");
    }
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_metric = 0;  // F1 (detector) or MSE (estimator)
};

struct TrainResult {
  MlpModel model;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double positive_weight = 1.0;
};

/// Detector threshold-0.5 F1 over labeled examples (labels > 0.5 are positive).
inline double detector_f1(const MlpModel& m, std::span<const Example> rows, double threshold = 0.5) {
  Confusion c;
  for (const auto& r : rows) c.add(m.forward(r.x) >= threshold, r.y > 0.5);
  return c.f1();
}

inline double estimator_mse(const MlpModel& m, std::span<const Example> rows) {
  if (rows.empty()) return 0.0;
  double s = 0;
  for (const auto& r : rows) {
    double e = m.forward(r.x) - r.y;
    s += e * e;
  }
  return s / static_cast<double>(rows.size());
}

/// Mini-batch Adam; keeps the parameters with the best validation metric (training rows stand in
/// when no validation rows are given). Deterministic for fixed data and config.
inline TrainResult train(Task task, const std::vector<Example>& train_rows, const std::vector<Example>& val_rows,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (train_rows.empty()) throw Error("empty training set");
  const int dim = static_cast<int>(train_rows.front().x.size());
  for (const auto& r : train_rows) {
    if (static_cast<int>(r.x.size()) != dim) throw Error("training rows have inconsistent lengths");
  }

  TrainResult result;
  std::vector<Example> rows = train_rows;
  if (task == Task::detector) {
    std::size_t pos = 0;
    for (const auto& r : rows) pos += r.y > 0.5;
    if (pos == 0 || pos == rows.size()) throw Error("detector training labels are all one class");
    double w = cfg.class_weight > 0 ? cfg.class_weight
                                    : std::clamp(static_cast<double>(rows.size() - pos) / pos, 1.0,
                                                 cfg.max_class_weight);
    result.positive_weight = w;
    for (auto& r : rows) r.weight = r.y > 0.5 ? w : 1.0;
  }

  std::vector<std::vector<double>> xs;
  for (const auto& r : rows) xs.push_back(r.x);
  MlpModel model = MlpModel::init(dim, task, cfg.seed);
  model.set_norm(NormStats::fit(xs));

  const auto& val = val_rows.empty() ? train_rows : val_rows;
  const Loss loss = loss_for(task);
  AdamOptimizer adam(model.size(), cfg.learning_rate);
  std::mt19937_64 shuffle_rng(splitmix64(cfg.seed));
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad;
  std::vector<Example> batch;

  auto metric = [&](const MlpModel& m) { return task == Task::detector ? detector_f1(m, val) : estimator_mse(m, val); };
  auto better = [&](double a, double b) { return task == Task::detector ? a > b : a < b; };

  MlpModel best = model;
  double best_metric = metric(model);
  double best_val_loss = loss_and_gradient(model, val, loss);
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) batch.push_back(rows[order[i]]);
      epoch_loss += loss_and_gradient(model, batch, loss, &grad) * batch.size();
      adam.step(model.params(), grad);
    }
    EpochRecord rec{epoch, epoch_loss / rows.size(), loss_and_gradient(model, val, loss), metric(model)};
    result.history.push_back(rec);
    bool improved = better(rec.val_metric, best_metric) ||
                    (rec.val_metric == best_metric && rec.val_loss < best_val_loss);
    if (improved) {
      best = model;
      best_metric = rec.val_metric;
      best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  result.model = std::move(best);
  return result;
}

/// Threshold in {0.05, 0.10, ..., 0.95} with the best F1 on the given rows (ties keep the one closest to 0.5).
inline double tune_threshold(const MlpModel& detector, std::span<const Example> rows) {
  double best_t = 0.5, best_f1 = detector_f1(detector, rows, 0.5);
  for (int i = 1; i <= 19; ++i) {
    double t = i * 0.05;
    double f = detector_f1(detector, rows, t);
    if (f > best_f1 || (f == best_f1 && std::abs(t - 0.5) < std::abs(best_t - 0.5))) {
      best_f1 = f;
      best_t = t;
    }
  }
  return best_t;
}

struct MinutePrediction {
  Timestamp minute{};
  double p_rain = 0;
  double intensity_mm_per_min = 0;  // clamped at 0
};

inline MinutePrediction predict_minute(const MlpModel& detector, const MlpModel& estimator, Timestamp minute,
                                       std::span<const double> row) {
  if (detector.task() != Task::detector || estimator.task() != Task::estimator) {
    throw Error("predict_minute needs a detector and an estimator");
  }
  return {minute, detector.forward(row), std::max(0.0, estimator.forward(row))};
}

/// Builds training examples from a labeled feature table. Estimator rows keep raining minutes only.
inline std::vector<Example> make_examples(const FeatureTable& table, Task task, bool complete_only = false) {
  std::vector<Example> out;
  for (const auto& r : table.rows) {
    if (!r.is_raining) throw Error("feature table has no label columns");
    if (complete_only && !r.complete) continue;
    if (task == Task::detector) {
      out.push_back({r.x, *r.is_raining ? 1.0 : 0.0, 1.0});
    } else if (*r.is_raining) {
      out.push_back({r.x, r.intensity_mm_per_min.value_or(0.0), 1.0});
    }
  }
  return out;
}

inline nlohmann::json to_json(const MlpModel& m) {
  nlohmann::json j;
  j["schema_version"] = MlpModel::kSchemaVersion;
  j["feature_schema"] = kFeatureSchemaVersion;
  j["task"] = to_string(m.task());
  j["head"] = m.task() == Task::detector ? "sigmoid" : "linear";
  j["input_dim"] = m.input_dim();
  j["threshold"] = m.threshold();
  j["norm_stats"] = {{"mean", m.norm().mean}, {"std", m.norm().stddev}};
  auto p = m.params();
  auto block = [&](std::size_t off, std::size_t n) { return std::vector<double>(p.begin() + off, p.begin() + off + n); };
  constexpr int H = MlpModel::kHidden;
  j["layers"] = nlohmann::json::array({
      {{"rows", H}, {"cols", m.input_dim()}, {"activation", "relu"}, {"weights", block(m.w1(), H * m.input_dim())},
       {"bias", block(m.b1(), H)}},
      {{"rows", H}, {"cols", H}, {"activation", "relu"}, {"weights", block(m.w2(), H * H)}, {"bias", block(m.b2(), H)}},
      {{"rows", 1}, {"cols", H}, {"activation", j["head"]}, {"weights", block(m.w3(), H)}, {"bias", block(m.b3(), 1)}},
  });
  return j;
}

inline MlpModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != MlpModel::kSchemaVersion) throw Error("unsupported model schema version");
    if (j.value("feature_schema", kFeatureSchemaVersion) != kFeatureSchemaVersion) {
      throw Error("model was trained on a different feature schema");
    }
    MlpModel m(j.at("input_dim").get<int>(), parse_task(j.at("task").get<std::string>()));
    m.set_norm({j.at("norm_stats").at("mean").get<std::vector<double>>(),
                j.at("norm_stats").at("std").get<std::vector<double>>()});
    m.set_threshold(j.value("threshold", 0.5));
    const auto& layers = j.at("layers");
    if (layers.size() != 3) throw Error("model must have three layers");
    std::size_t offset = 0;
    auto p = m.params();
    for (const auto& layer : layers) {
      for (const char* key : {"weights", "bias"}) {
        auto v = layer.at(key).get<std::vector<double>>();
        if (offset + v.size() > p.size()) throw Error("model layer sizes do not match input_dim");
        for (double x : v) {
          if (!std::isfinite(x)) throw Error("model weights must be finite");
          p[offset++] = x;
        }
      }
    }
    if (offset != p.size()) throw Error("model layer sizes do not match input_dim");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model file: ") + e.what());
  }
}

inline void save_model(const std::filesystem::path& path, const MlpModel& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << to_json(m).dump(2) << '\n';
}

inline MlpModel load_model(const std::filesystem::path& path) {
  try {
    return model_from_json(nlohmann::json::parse(read_text_file(path.string())));
  } catch (const nlohmann::json::exception& e) {
    throw Error("model file '" + path.string() + "': " + e.what());
  }
}

}  // namespace rainsense
