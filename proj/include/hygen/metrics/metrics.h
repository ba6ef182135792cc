#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hygen/sim/events.h"

namespace hygen::metrics {

enum class Stat : std::uint8_t { kMean, kP99 };

// Mean, or nearest-rank P99 (sorted[ceil(0.99 n) - 1]). Throws
// ValidationError on empty input.
double aggregate(std::span<const double> values, Stat stat);
// Nearest-rank percentile for q in (0, 1].
double percentile(std::span<const double> values, double q);

// Differences of successive emission times.
std::vector<double> tbt_series(std::span<const double> emissions_ms);

// hybrid / baseline - 1. Throws ValidationError unless baseline > 0.
double interference_ratio(double hybrid, double baseline);

// Sample correlation; NaN when either side has zero variance or n < 2.
double pearson(std::span<const double> x, std::span<const double> y);

struct WindowPoint {
  double start_s = 0.0;
  double online_tps = 0.0;
  double offline_tps = 0.0;
  double online_qps = 0.0;  // online arrivals per second
};

// Latency figures cover online requests only and are NaN without samples.
struct RunMetrics {
  double mean_ttft = 0.0;
  double p99_ttft = 0.0;
  double mean_tbt = 0.0;
  double p99_tbt = 0.0;
  double online_tps = 0.0;
  double offline_tps = 0.0;
  double total_tps = 0.0;
  double online_qps = 0.0;   // completed online requests per second
  double offline_qps = 0.0;
  double horizon_s = 0.0;

  std::int64_t online_tokens = 0;
  std::int64_t offline_tokens = 0;
  std::int64_t online_completed = 0;
  std::int64_t offline_completed = 0;
  std::int64_t online_arrivals = 0;
  std::int64_t preemptions = 0;
  std::size_t ttft_samples = 0;
  std::size_t tbt_samples = 0;
  // Online requests that arrived but never produced a first token.
  std::int64_t dropped = 0;

  double window_s = 0.0;
  std::vector<WindowPoint> windows;
  // Online arrival rate vs offline TPS over complete windows.
  double qps_offline_correlation = 0.0;
};

enum class SloMetric : std::uint8_t { kMeanTtft, kP99Ttft, kMeanTbt, kP99Tbt };
std::string_view to_string(SloMetric m);
SloMetric parse_slo_metric(std::string_view s);
double metric_value(const RunMetrics& r, SloMetric m);

// Streams events into running tallies, so a run need not keep its log.
class MetricsCollector : public sim::EventSink {
 public:
  explicit MetricsCollector(double window_s = 10.0);

  void on_event(const sim::Event& e) override;

  // horizon_ms is raised to the last event time if that is later.
  RunMetrics finish(double horizon_ms) const;

  const std::vector<double>& ttft_values() const { return ttft_; }
  const std::vector<double>& tbt_values() const { return tbt_; }

 private:
  void bump(std::vector<double>& series, double t_ms, double amount);

  double window_s_;
  std::unordered_map<RequestId, double> arrival_;
  std::unordered_map<RequestId, double> last_emit_;
  std::vector<double> ttft_;
  std::vector<double> tbt_;
  std::vector<double> win_online_tokens_;
  std::vector<double> win_offline_tokens_;
  std::vector<double> win_online_arrivals_;
  std::int64_t online_tokens_ = 0;
  std::int64_t offline_tokens_ = 0;
  std::int64_t online_completed_ = 0;
  std::int64_t offline_completed_ = 0;
  std::int64_t online_arrivals_ = 0;
  std::int64_t online_started_ = 0;
  std::int64_t preemptions_ = 0;
  double last_t_ms_ = 0.0;
};

RunMetrics compute_metrics(const sim::EventLog& log, double window_s, double horizon_ms);

// Summary CSV: the metric columns, then config_hash.
std::string summary_header();
std::string summary_row(const RunMetrics& r, std::string_view config_hash);
void write_windows_csv(std::ostream& out, const RunMetrics& r);

}  // namespace hygen::metrics
