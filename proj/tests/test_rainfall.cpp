#include <gtest/gtest.h>

#include <sstream>

#include "rainsense/rainfall.hpp"
#include "support.hpp"

using namespace rainsense;
using std::chrono::minutes;
using testing_support::Gen;
using testing_support::ts;

namespace {

std::vector<GaugeRecord> parse(const std::string& csv) {
  std::istringstream in(csv);
  return parse_gauge(in);
}

const RainLabel& at(const std::vector<RainLabel>& labels, const std::string& t) {
  auto it = std::find_if(labels.begin(), labels.end(), [&](const RainLabel& l) { return l.minute == ts(t); });
  if (it == labels.end()) throw std::runtime_error("no label at " + t);
  return *it;
}

std::vector<MinutePrediction> preds_from(const std::vector<std::pair<std::string, double>>& v, double p = 1.0) {
  std::vector<MinutePrediction> out;
  for (const auto& [t, i] : v) out.push_back({ts(t), p, i});
  return out;
}

}  // namespace

TEST(Gauge, EmptyFileGivesNoRecords) {
  EXPECT_TRUE(parse("").empty());
  EXPECT_TRUE(parse("timestamp_utc,cumulative_mm\n").empty());
}

TEST(Gauge, ParsesTips) {
  auto r = parse("timestamp_utc,cumulative_mm\n2024-06-01T10:00:00Z,0.22\n2024-06-01T10:03:00Z,0.44\n");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[1].t, ts("2024-06-01T10:03:00Z"));
  EXPECT_DOUBLE_EQ(r[1].cumulative_mm, 0.44);
}

TEST(Gauge, DecreasingIsNotMonotone) {
  try {
    parse("2024-06-01T10:00:00Z,0.44\n2024-06-01T10:03:00Z,0.22\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("gauge log not monotone"), std::string::npos);
  }
}

TEST(Gauge, RejectsDisorderAndOddIncrements) {
  EXPECT_THROW(parse("2024-06-01T10:03:00Z,0\n2024-06-01T10:00:00Z,0.22\n"), Error);
  EXPECT_THROW(parse("2024-06-01T10:00:00Z,0\n2024-06-01T10:03:00Z,0.3\n"), Error);
}

TEST(Labels, InterpolatedMinuteDifferences) {
  auto recs = parse("2024-06-01T10:00:00Z,0.22\n2024-06-01T10:02:00Z,0.44\n");
  auto labels = minute_labels(recs, {}, ts("2024-06-01T09:58:00Z"), ts("2024-06-01T10:05:00Z"));
  EXPECT_NEAR(at(labels, "2024-06-01T10:01:00Z").intensity_mm_per_min, 0.11, 1e-12);
  EXPECT_NEAR(at(labels, "2024-06-01T10:02:00Z").intensity_mm_per_min, 0.11, 1e-12);
  EXPECT_TRUE(at(labels, "2024-06-01T10:02:00Z").is_raining);
  EXPECT_FALSE(at(labels, "2024-06-01T10:00:00Z").is_raining);
  EXPECT_FALSE(at(labels, "2024-06-01T10:03:00Z").is_raining);
  EXPECT_EQ(at(labels, "2024-06-01T10:03:00Z").intensity_mm_per_min, 0.0);
}

TEST(Labels, NoTipsAllDry) {
  auto recs = parse("2024-06-01T10:00:00Z,1.1\n2024-06-01T12:00:00Z,1.1\n");
  auto labels = minute_labels(recs, {}, ts("2024-06-01T10:00:00Z"), ts("2024-06-01T12:00:00Z"));
  EXPECT_EQ(labels.size(), 120u);
  for (const auto& l : labels) {
    EXPECT_FALSE(l.is_raining);
    EXPECT_EQ(l.intensity_mm_per_min, 0.0);
  }
}

TEST(Labels, AdjustmentBeforeSingleTipMarksThoseMinutesRaining) {
  auto recs = parse("2024-06-01T08:00:00Z,0\n2024-06-01T10:00:00Z,0.22\n");
  std::vector<BoundaryAdjustment> adj{{1, ts("2024-06-01T09:55:00Z"), ts("2024-06-01T10:00:00Z")}};
  auto labels = minute_labels(recs, adj, ts("2024-06-01T09:00:00Z"), ts("2024-06-01T10:30:00Z"));
  int raining = 0;
  double total = 0;
  for (const auto& l : labels) {
    raining += l.is_raining;
    total += l.intensity_mm_per_min;
  }
  EXPECT_EQ(raining, 5);
  for (const char* t : {"2024-06-01T09:56:00Z", "2024-06-01T09:58:00Z", "2024-06-01T10:00:00Z"}) {
    EXPECT_TRUE(at(labels, t).is_raining);
    EXPECT_NEAR(at(labels, t).intensity_mm_per_min, 0.044, 1e-12);
  }
  EXPECT_FALSE(at(labels, "2024-06-01T09:55:00Z").is_raining);
  EXPECT_NEAR(total, 0.22, 1e-12);
}

TEST(Labels, AdjustmentExcludingTipsRejected) {
  auto recs = parse("2024-06-01T08:00:00Z,0\n2024-06-01T10:00:00Z,0.22\n2024-06-01T10:10:00Z,0.44\n");
  std::vector<BoundaryAdjustment> adj{{1, ts("2024-06-01T09:50:00Z"), ts("2024-06-01T10:05:00Z")}};
  EXPECT_THROW(minute_labels(recs, adj, ts("2024-06-01T09:00:00Z"), ts("2024-06-01T11:00:00Z")), Error);
  std::vector<BoundaryAdjustment> unknown{{7, ts("2024-06-01T09:50:00Z"), ts("2024-06-01T10:15:00Z")}};
  EXPECT_THROW(minute_labels(recs, unknown, ts("2024-06-01T09:00:00Z"), ts("2024-06-01T11:00:00Z")), Error);
}

TEST(Labels, EventsSplitOnHourGaps) {
  auto recs = parse(
      "2024-06-01T08:00:00Z,0\n2024-06-01T09:00:00Z,0.22\n2024-06-01T09:20:00Z,0.44\n2024-06-01T11:00:00Z,0.66\n");
  auto ev = detect_events(recs);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[0].last_tip, ts("2024-06-01T09:20:00Z"));
  EXPECT_NEAR(ev[0].total_mm, 0.44, 1e-12);
  EXPECT_EQ(ev[1].first_tip, ts("2024-06-01T11:00:00Z"));
}

TEST(Labels, KeyedByMinuteStartShiftsMarks) {
  std::vector<RainLabel> l{{ts("2024-06-01T10:01:00Z"), true, 0.1}};
  EXPECT_EQ(keyed_by_minute_start(l)[0].minute, ts("2024-06-01T10:00:00Z"));
}

TEST(LabelsProperty, ConservationOverRandomLogs) {
  Gen g(61);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<GaugeRecord> recs;
    Timestamp t = ts("2024-06-01T00:00:00Z") + std::chrono::seconds(g.integer(0, 3600));
    double cum = 0.22 * g.integer(0, 50);
    recs.push_back({t, cum});
    int n = g.integer(1, 60);
    for (int i = 0; i < n; ++i) {
      t += std::chrono::seconds(g.integer(1, g.coin(0.1) ? 10000 : 600));
      cum += 0.22 * g.integer(0, 3);
      recs.push_back({t, cum});
    }
    auto from = std::chrono::floor<minutes>(recs.front().t);
    auto to = std::chrono::ceil<minutes>(recs.back().t) + minutes(1);
    auto labels = minute_labels(recs, {}, from, to);
    double sum = 0;
    for (const auto& l : labels) {
      sum += l.intensity_mm_per_min;
      EXPECT_GE(l.intensity_mm_per_min, 0.0);
      if (!l.is_raining) {
        EXPECT_EQ(l.intensity_mm_per_min, 0.0);
      }
    }
    EXPECT_NEAR(sum, recs.back().cumulative_mm - recs.front().cumulative_mm, 1e-9);
  }
}

TEST(Daily, GatingSuppressesLowProbabilityMinutes) {
  std::vector<MinutePrediction> p;
  for (int i = 0; i < 100; ++i) p.push_back({ts("2024-06-01T00:00:00Z") + minutes(i), 0.3, 0.01});
  auto d = daily_aggregate(p);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].total_mm, 0.0);
  EXPECT_EQ(d[0].raining_minutes, 0);
}

TEST(Daily, SixtyGatedMinutes) {
  std::vector<MinutePrediction> p;
  for (int i = 0; i < 60; ++i) p.push_back({ts("2024-06-01T03:00:00Z") + minutes(i), 0.9, 0.1});
  EXPECT_NEAR(daily_aggregate(p)[0].total_mm, 6.0, 1e-12);
  EXPECT_EQ(daily_aggregate(p)[0].raining_minutes, 60);
}

TEST(Daily, MidnightPartitionsAndTimezone) {
  auto p = preds_from({{"2024-06-01T23:59:00Z", 0.5}, {"2024-06-02T00:00:00Z", 0.25}});
  auto d = daily_aggregate(p);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].total_mm, 0.5);
  EXPECT_EQ(d[1].total_mm, 0.25);
  auto local = daily_aggregate(p, 0.5, minutes(-5 * 60));
  ASSERT_EQ(local.size(), 1u);
  EXPECT_EQ(format_date(local[0].date), "2024-06-01");
  EXPECT_EQ(local[0].total_mm, 0.75);
}

TEST(DailyProperty, AllRainingEqualsPlainSum) {
  Gen g(62);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<MinutePrediction> p;
    std::map<Date, double> sums;
    auto t = ts("2024-06-01T00:00:00Z");
    for (int i = 0; i < 3000; ++i) {
      t += minutes(g.integer(1, 5));
      double v = g.uniform(0, 0.5);
      p.push_back({t, 1.0, v});
      sums[local_date(t, minutes(0))] += v;
    }
    auto d = daily_aggregate(p);
    ASSERT_EQ(d.size(), sums.size());
    for (const auto& row : d) EXPECT_NEAR(row.total_mm, sums[row.date], 1e-12);
  }
}

TEST(Detection, PerfectPredictions) {
  std::vector<RainLabel> l{{ts("2024-06-01T00:00:00Z"), true, 0.1}, {ts("2024-06-01T00:01:00Z"), false, 0}};
  std::vector<MinutePrediction> p{{l[0].minute, 0.9, 0.1}, {l[1].minute, 0.1, 0}};
  auto m = detection_metrics(p, l);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.f1, 1.0);
}

TEST(Detection, ConfusionArithmetic) {
  Confusion c{2, 1, 1, 6};
  EXPECT_DOUBLE_EQ(c.accuracy(), 0.8);
  EXPECT_DOUBLE_EQ(c.f1(), 2.0 / 3.0);
  Confusion none{0, 0, 5, 5};
  EXPECT_EQ(none.f1(), 0.0);
}

TEST(Detection, AllNegativeGivesZeroF1) {
  std::vector<RainLabel> l;
  std::vector<MinutePrediction> p;
  for (int i = 0; i < 10; ++i) {
    l.push_back({ts("2024-06-01T00:00:00Z") + minutes(i), i % 2 == 0, i % 2 == 0 ? 0.1 : 0.0});
    p.push_back({l.back().minute, 0.1, 0.0});
  }
  EXPECT_EQ(detection_metrics(p, l).f1, 0.0);
  EXPECT_EQ(detection_metrics(p, l).accuracy, 0.5);
}

TEST(Estimation, PerfectDays) {
  std::vector<DailyRainfall> d{{parse_date("2024-06-01"), 3.0, 10}, {parse_date("2024-06-02"), 0.0, 0}};
  auto m = estimation_metrics(d, d);
  EXPECT_EQ(*m.tre, 0.0);
  EXPECT_EQ(m.made, 0.0);
  EXPECT_EQ(*m.mape, 0.0);
}

TEST(Estimation, TreCancellation) {
  std::vector<DailyRainfall> pred{{parse_date("2024-06-01"), 12, 0}, {parse_date("2024-06-02"), 18, 0}};
  std::vector<DailyRainfall> truth{{parse_date("2024-06-01"), 10, 0}, {parse_date("2024-06-02"), 20, 0}};
  auto m = estimation_metrics(pred, truth);
  EXPECT_DOUBLE_EQ(*m.tre, 0.0);
  EXPECT_DOUBLE_EQ(m.made, 2.0);
  EXPECT_DOUBLE_EQ(*m.mape, 0.15);
}

TEST(Estimation, SmallTrueDayCanExceedFullPercentage) {
  std::vector<DailyRainfall> pred{{parse_date("2024-06-01"), 0.9, 0}};
  std::vector<DailyRainfall> truth{{parse_date("2024-06-01"), 0.3, 0}};
  auto m = estimation_metrics(pred, truth);
  EXPECT_GT(*m.mape, 1.0);
  EXPECT_LT(m.made, 1.0);
}

TEST(Estimation, NoTrueRainLeavesTreAndMapeUndefined) {
  std::vector<DailyRainfall> pred{{parse_date("2024-06-01"), 0.5, 0}};
  std::vector<DailyRainfall> truth{{parse_date("2024-06-01"), 0.0, 0}};
  auto m = estimation_metrics(pred, truth);
  EXPECT_FALSE(m.tre);
  EXPECT_FALSE(m.mape);
  EXPECT_DOUBLE_EQ(m.made, 0.5);
}

TEST(EstimationProperty, MatchingSumsGiveZeroTre) {
  Gen g(63);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<DailyRainfall> pred, truth;
    int n = g.integer(2, 30);
    double total = 0;
    for (int i = 0; i < n; ++i) {
      double v = g.integer(0, 40) * 0.25;
      truth.push_back({parse_date("2024-06-01") + std::chrono::days(i), v, 0});
      total += v;
    }
    // move whole quarter-millimetres between days so sums stay exact
    pred = truth;
    for (int k = 0; k < 10; ++k) {
      int a = g.integer(0, n - 1), b = g.integer(0, n - 1);
      if (pred[a].total_mm >= 0.25) {
        pred[a].total_mm -= 0.25;
        pred[b].total_mm += 0.25;
      }
    }
    auto m = estimation_metrics(pred, truth);
    if (total > 0) {
      EXPECT_EQ(*m.tre, 0.0);
    }
    EXPECT_GE(m.made, 0.0);
  }
}

TEST(Evaluate, PerfectPredictionsReport) {
  std::vector<RainLabel> l;
  std::vector<MinutePrediction> p;
  for (int i = 0; i < 120; ++i) {
    bool r = i >= 30 && i < 60;
    l.push_back({ts("2024-06-01T00:00:00Z") + minutes(i), r, r ? 0.1 : 0.0});
    p.push_back({l.back().minute, r ? 1.0 : 0.0, r ? 0.1 : 0.0});
  }
  auto rep = evaluate(p, l);
  EXPECT_EQ(rep.detection.f1, 1.0);
  EXPECT_EQ(*rep.estimation.tre, 0.0);
  std::ostringstream s;
  write_report_summary(s, rep);
  EXPECT_NE(s.str().find("f1 1\n"), std::string::npos);
  EXPECT_NE(s.str().find("tre 0\n"), std::string::npos);
}

TEST(CsvRoundTrips, LabelsPredictionsDaily) {
  std::vector<RainLabel> l{{ts("2024-06-01T00:00:00Z"), true, 0.123456789}, {ts("2024-06-01T00:01:00Z"), false, 0}};
  std::stringstream a;
  write_labels_csv(a, l);
  auto lb = read_labels_csv(a);
  EXPECT_EQ(lb[0].intensity_mm_per_min, 0.123456789);
  EXPECT_FALSE(lb[1].is_raining);

  std::vector<MinutePrediction> p{{ts("2024-06-01T00:00:00Z"), 0.7, 1.0 / 3}};
  std::stringstream b;
  write_predictions_csv(b, p);
  EXPECT_EQ(read_predictions_csv(b)[0].intensity_mm_per_min, 1.0 / 3);

  std::vector<DailyRainfall> d{{parse_date("2024-06-01"), 2.5, 25}};
  std::stringstream c;
  write_daily_csv(c, d);
  auto db = read_daily_csv(c);
  EXPECT_EQ(db[0].total_mm, 2.5);
  EXPECT_EQ(db[0].raining_minutes, 25);
}

TEST(Split, SixtyTwentyTwenty) {
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  auto s = sequential_split(v);
  EXPECT_EQ(s.train.size(), 60u);
  EXPECT_EQ(s.val.size(), 20u);
  EXPECT_EQ(s.test.size(), 20u);
  EXPECT_LT(s.train.back(), s.val.front());
  EXPECT_LT(s.val.back(), s.test.front());
  EXPECT_TRUE(s.warnings.empty());
}

TEST(Split, AllTrainWarns) {
  std::vector<int> v(10, 1);
  auto s = sequential_split(v, 1, 0, 0);
  EXPECT_EQ(s.train.size(), 10u);
  EXPECT_TRUE(s.val.empty());
  EXPECT_TRUE(s.test.empty());
  EXPECT_EQ(s.warnings.size(), 2u);
  EXPECT_THROW(sequential_split(v, 0.5, 0.2, 0.2), Error);
}

TEST(SplitProperty, Partition) {
  Gen g(64);
  for (int trial = 0; trial < 100; ++trial) {
    int n = g.integer(0, 500);
    std::vector<int> v(n);
    std::iota(v.begin(), v.end(), 0);
    double a = g.uniform(), b = g.uniform(0, 1 - a);
    auto s = sequential_split(v, a, b, 1 - a - b);
    std::vector<int> all(s.train);
    all.insert(all.end(), s.val.begin(), s.val.end());
    all.insert(all.end(), s.test.begin(), s.test.end());
    EXPECT_EQ(all, v);
  }
}
