#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "helpers.h"
#include "hygen/errors.h"
#include "hygen/metrics/metrics.h"
#include "hygen/predictor/predictor.h"
#include "hygen/runner/runner.h"

using namespace hygen;
using namespace hygen::metrics;
using sim::Event;
using sim::EventKind;

namespace {

constexpr auto kOn = RequestClass::kOnline;
constexpr auto kOff = RequestClass::kOffline;

}  // namespace

TEST_CASE("nearest-rank percentiles") {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  CHECK(aggregate(v, Stat::kP99) == 99.0);
  CHECK(aggregate(v, Stat::kMean) == 50.5);
  CHECK(percentile(v, 0.5) == 50.0);
  CHECK(percentile(v, 1.0) == 100.0);
  const std::vector<double> one{7.0};
  CHECK(aggregate(one, Stat::kP99) == 7.0);
  const std::vector<double> ten{10, 9, 8, 7, 6, 5, 4, 3, 2, 1};
  CHECK(aggregate(ten, Stat::kP99) == 10.0);
  CHECK_THROWS_AS(aggregate(std::vector<double>{}, Stat::kMean), ValidationError);
}

TEST_CASE("tbt and interference") {
  const std::vector<double> t{100, 130, 150, 200};
  CHECK(tbt_series(t) == std::vector<double>{30, 20, 50});
  CHECK(tbt_series(std::vector<double>{5}).empty());
  CHECK(interference_ratio(12.0, 10.0) == doctest::Approx(0.2));
  CHECK_THROWS_AS(interference_ratio(1.0, 0.0), ValidationError);
}

TEST_CASE("pearson") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{8, 6, 4, 2};
  CHECK(pearson(x, y) == doctest::Approx(-1.0));
  CHECK(std::isnan(pearson(x, std::vector<double>{1, 1, 1, 1})));
  CHECK(std::isnan(pearson(std::vector<double>{1}, std::vector<double>{2})));
}

TEST_CASE("per-request latencies from events") {
  MetricsCollector c(1.0);
  c.on_event({0, EventKind::kArrive, 1, kOn});
  c.on_event({50, EventKind::kArrive, 2, kOn});
  c.on_event({100, EventKind::kFirstToken, 1, kOn});
  c.on_event({130, EventKind::kToken, 1, kOn});
  c.on_event({150, EventKind::kFirstToken, 2, kOn});
  c.on_event({160, EventKind::kToken, 1, kOn});
  c.on_event({160, EventKind::kComplete, 1, kOn});
  c.on_event({200, EventKind::kToken, 2, kOn});
  c.on_event({200, EventKind::kComplete, 2, kOn});
  c.on_event({0, EventKind::kArrive, 3, kOff});
  c.on_event({300, EventKind::kFirstToken, 3, kOff});
  c.on_event({300, EventKind::kComplete, 3, kOff});
  c.on_event({310, EventKind::kPreempt, 4, kOff});
  const auto r = c.finish(2000.0);
  CHECK(r.ttft_samples == 2);
  CHECK(r.mean_ttft == doctest::Approx(100.0));
  // TBT pooled over both requests: 30, 30, 50.
  CHECK(r.tbt_samples == 3);
  CHECK(r.mean_tbt == doctest::Approx(110.0 / 3.0));
  CHECK(r.p99_tbt == 50.0);
  CHECK(r.online_tokens == 5);
  CHECK(r.offline_tokens == 1);
  CHECK(r.online_completed == 2);
  CHECK(r.offline_completed == 1);
  CHECK(r.preemptions == 1);
  CHECK(r.dropped == 0);
  CHECK(r.horizon_s == 2.0);
  CHECK(r.online_tps == 2.5);
  CHECK(r.offline_tps == 0.5);
  CHECK(r.total_tps == 3.0);
  CHECK(r.online_qps == 1.0);
  REQUIRE(r.windows.size() == 1);
  CHECK(r.windows[0].online_qps == 2.0);
}

TEST_CASE("empty online side and horizon extension") {
  MetricsCollector c(10.0);
  c.on_event({0, EventKind::kArrive, 1, kOn});
  c.on_event({0, EventKind::kArrive, 2, kOff});
  c.on_event({4000, EventKind::kFirstToken, 2, kOff});
  const auto r = c.finish(1000.0);
  CHECK(std::isnan(r.mean_ttft));
  CHECK(std::isnan(r.p99_tbt));
  CHECK(r.dropped == 1);
  CHECK(r.horizon_s == 4.0);
  // The only window is incomplete.
  CHECK(std::isnan(r.qps_offline_correlation));
}

TEST_CASE("token events must be well formed") {
  MetricsCollector c;
  CHECK_THROWS_AS(c.on_event({1, EventKind::kFirstToken, 9, kOn}), ContractViolation);
  c.on_event({0, EventKind::kArrive, 9, kOn});
  CHECK_THROWS_AS(c.on_event({1, EventKind::kToken, 9, kOn}), ContractViolation);
}

TEST_CASE("windows and correlation") {
  MetricsCollector c(1.0);
  // Arrivals 1,2,3 per second; offline tokens 3,2,1 per second.
  RequestId id = 0;
  for (int w = 0; w < 3; ++w) {
    for (int k = 0; k <= w; ++k) c.on_event({w * 1000.0 + 10.0 * k, EventKind::kArrive, id++, kOn});
    for (int k = 0; k < 3 - w; ++k) c.on_event({w * 1000.0 + 500.0 + k, EventKind::kToken, 100, kOff});
  }
  const auto r = c.finish(3000.0);
  REQUIRE(r.windows.size() == 3);
  CHECK(r.windows[1].online_qps == 2.0);
  CHECK(r.windows[2].offline_tps == 1.0);
  CHECK(r.qps_offline_correlation == doctest::Approx(-1.0));
  std::ostringstream out;
  write_windows_csv(out, r);
  CHECK(out.str().rfind("window_start_s,online_tps,offline_tps,online_qps\n", 0) == 0);
}

TEST_CASE("metrics recomputed from a log match the live tally") {
  sim::HardwareModel hw;
  hw.c0 = 4.0;
  hw.c1 = 0.02;
  hw.c2 = 0.1;
  hw.noise_pct = 0.02;
  const auto model = predictor::PredictorModel::from_hardware(hw);
  RequestStream s;
  for (RequestId id = 0; id < 30; ++id) s.requests.push_back(test::online(id, id * 200.0, 64, 8));
  for (RequestId id = 30; id < 50; ++id) s.requests.push_back(test::offline(id, 100, 10));
  std::stable_sort(s.requests.begin(), s.requests.end(),
                   [](const Request& a, const Request& b) { return a.arrival_ms < b.arrival_ms; });
  s.duration_ms = 6000.0;
  runner::RunConfig run;
  run.hardware = hw;
  run.scheduler.latency_budget_ms = 15.0;
  sim::EventLog log;
  MetricsCollector live(1.0);
  runner::TeeSink tee{&log, &live};
  runner::simulate(s, model, run, tee);
  const auto a = live.finish(6000.0);
  const auto b = compute_metrics(log, 1.0, 6000.0);
  CHECK(a.mean_tbt == b.mean_tbt);
  CHECK(a.p99_ttft == b.p99_ttft);
  CHECK(a.offline_tokens == b.offline_tokens);
  CHECK(a.online_completed == 30);
  CHECK(a.online_tokens == 30 * 8);
  CHECK(a.ttft_samples == 30);
  CHECK(a.tbt_samples == 30 * 7);

  // Token accounting against the log itself.
  std::int64_t off_tokens = 0;
  for (const auto& e : log.events()) {
    if (e.cls == kOff && (e.kind == EventKind::kToken || e.kind == EventKind::kFirstToken)) ++off_tokens;
  }
  CHECK(a.offline_tokens == off_tokens);

  const auto row = summary_row(a, "abc");
  const auto head = summary_header();
  CHECK(std::count(row.begin(), row.end(), ',') == std::count(head.begin(), head.end(), ','));
}

TEST_CASE("slo metric names") {
  CHECK(parse_slo_metric("p99_tbt") == SloMetric::kP99Tbt);
  CHECK(to_string(SloMetric::kMeanTtft) == "mean_ttft");
  CHECK_THROWS_AS(parse_slo_metric("p50_tbt"), ValidationError);
  RunMetrics r;
  r.p99_ttft = 3.0;
  CHECK(metric_value(r, SloMetric::kP99Ttft) == 3.0);
}
