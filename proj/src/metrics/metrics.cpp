#include "hygen/metrics/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "hygen/errors.h"

namespace hygen::metrics {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw ValidationError("percentile of an empty sample");
  if (!(q > 0.0 && q <= 1.0)) throw ValidationError("percentile q must be in (0, 1]");
  std::vector<double> v(values.begin(), values.end());
  const auto n = static_cast<double>(v.size());
  // The small slack keeps 0.99 * 100 from landing on 99.000000000000014.
  auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, v.size());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank - 1), v.end());
  return v[rank - 1];
}

double aggregate(std::span<const double> values, Stat stat) {
  if (values.empty()) throw ValidationError("aggregate of an empty sample");
  if (stat == Stat::kP99) return percentile(values, 0.99);
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

std::vector<double> tbt_series(std::span<const double> emissions_ms) {
  std::vector<double> out;
  for (std::size_t i = 1; i < emissions_ms.size(); ++i) {
    out.push_back(emissions_ms[i] - emissions_ms[i - 1]);
  }
  return out;
}

double interference_ratio(double hybrid, double baseline) {
  if (!(baseline > 0.0)) throw ValidationError("interference ratio needs baseline > 0");
  return hybrid / baseline - 1.0;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("pearson: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return kNaN;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return kNaN;
  return sxy / std::sqrt(sxx * syy);
}

std::string_view to_string(SloMetric m) {
  switch (m) {
    case SloMetric::kMeanTtft: return "mean_ttft";
    case SloMetric::kP99Ttft: return "p99_ttft";
    case SloMetric::kMeanTbt: return "mean_tbt";
    case SloMetric::kP99Tbt: return "p99_tbt";
  }
  return "?";
}

SloMetric parse_slo_metric(std::string_view s) {
  for (auto m : {SloMetric::kMeanTtft, SloMetric::kP99Ttft, SloMetric::kMeanTbt,
                 SloMetric::kP99Tbt}) {
    if (s == to_string(m)) return m;
  }
  throw ValidationError("unknown SLO metric '" + std::string(s) + "'");
}

double metric_value(const RunMetrics& r, SloMetric m) {
  switch (m) {
    case SloMetric::kMeanTtft: return r.mean_ttft;
    case SloMetric::kP99Ttft: return r.p99_ttft;
    case SloMetric::kMeanTbt: return r.mean_tbt;
    case SloMetric::kP99Tbt: return r.p99_tbt;
  }
  return kNaN;
}

// ---------------------------------------------------------------------------

MetricsCollector::MetricsCollector(double window_s) : window_s_(window_s) {
  if (!(window_s > 0.0)) throw ValidationError("window_s must be > 0");
}

void MetricsCollector::bump(std::vector<double>& series, double t_ms, double amount) {
  const auto i = static_cast<std::size_t>(std::max(0.0, t_ms) / (window_s_ * 1000.0));
  if (series.size() <= i) series.resize(i + 1, 0.0);
  series[i] += amount;
}

void MetricsCollector::on_event(const sim::Event& e) {
  using sim::EventKind;
  last_t_ms_ = std::max(last_t_ms_, e.t_ms);
  const bool online = e.cls == RequestClass::kOnline;
  switch (e.kind) {
    case EventKind::kArrive:
      if (online) {
        arrival_[e.request] = e.t_ms;
        ++online_arrivals_;
        bump(win_online_arrivals_, e.t_ms, 1.0);
      }
      break;
    case EventKind::kFirstToken:
    case EventKind::kToken:
      if (online) {
        ++online_tokens_;
        bump(win_online_tokens_, e.t_ms, 1.0);
        if (e.kind == EventKind::kFirstToken) {
          auto a = arrival_.find(e.request);
          if (a == arrival_.end()) {
            throw ContractViolation("first token of request " + std::to_string(e.request) +
                                    " without an arrival");
          }
          ttft_.push_back(e.t_ms - a->second);
          ++online_started_;
        } else {
          auto last = last_emit_.find(e.request);
          if (last == last_emit_.end()) {
            throw ContractViolation("token of request " + std::to_string(e.request) +
                                    " before its first token");
          }
          tbt_.push_back(e.t_ms - last->second);
        }
        last_emit_[e.request] = e.t_ms;
      } else {
        ++offline_tokens_;
        bump(win_offline_tokens_, e.t_ms, 1.0);
      }
      break;
    case EventKind::kComplete:
      if (online) {
        ++online_completed_;
        last_emit_.erase(e.request);
      } else {
        ++offline_completed_;
      }
      break;
    case EventKind::kPreempt:
      ++preemptions_;
      break;
  }
}

RunMetrics MetricsCollector::finish(double horizon_ms) const {
  RunMetrics r;
  const double horizon = std::max(horizon_ms, last_t_ms_);
  r.horizon_s = horizon / 1000.0;
  if (!ttft_.empty()) {
    r.mean_ttft = aggregate(ttft_, Stat::kMean);
    r.p99_ttft = aggregate(ttft_, Stat::kP99);
  } else {
    r.mean_ttft = r.p99_ttft = kNaN;
  }
  if (!tbt_.empty()) {
    r.mean_tbt = aggregate(tbt_, Stat::kMean);
    r.p99_tbt = aggregate(tbt_, Stat::kP99);
  } else {
    r.mean_tbt = r.p99_tbt = kNaN;
  }
  r.ttft_samples = ttft_.size();
  r.tbt_samples = tbt_.size();
  r.online_tokens = online_tokens_;
  r.offline_tokens = offline_tokens_;
  r.online_completed = online_completed_;
  r.offline_completed = offline_completed_;
  r.online_arrivals = online_arrivals_;
  r.preemptions = preemptions_;
  r.dropped = online_arrivals_ - online_started_;
  if (r.horizon_s > 0.0) {
    r.online_tps = static_cast<double>(online_tokens_) / r.horizon_s;
    r.offline_tps = static_cast<double>(offline_tokens_) / r.horizon_s;
    r.online_qps = static_cast<double>(online_completed_) / r.horizon_s;
    r.offline_qps = static_cast<double>(offline_completed_) / r.horizon_s;
  }
  r.total_tps = r.online_tps + r.offline_tps;

  r.window_s = window_s_;
  const std::size_t n = std::max({win_online_tokens_.size(), win_offline_tokens_.size(),
                                  win_online_arrivals_.size()});
  auto at = [](const std::vector<double>& v, std::size_t i) {
    return i < v.size() ? v[i] : 0.0;
  };
  std::vector<double> qps, off;
  for (std::size_t i = 0; i < n; ++i) {
    WindowPoint w;
    w.start_s = static_cast<double>(i) * window_s_;
    w.online_tps = at(win_online_tokens_, i) / window_s_;
    w.offline_tps = at(win_offline_tokens_, i) / window_s_;
    w.online_qps = at(win_online_arrivals_, i) / window_s_;
    r.windows.push_back(w);
    if ((w.start_s + window_s_) * 1000.0 <= horizon + 1e-9) {
      qps.push_back(w.online_qps);
      off.push_back(w.offline_tps);
    }
  }
  r.qps_offline_correlation = pearson(qps, off);
  return r;
}

RunMetrics compute_metrics(const sim::EventLog& log, double window_s, double horizon_ms) {
  MetricsCollector c(window_s);
  log.replay(c);
  return c.finish(horizon_ms);
}

std::string summary_header() {
  return "mean_ttft_ms,p99_ttft_ms,mean_tbt_ms,p99_tbt_ms,online_tps,offline_tps,total_tps,"
         "online_qps,offline_qps,horizon_s,online_tokens,offline_tokens,online_completed,"
         "offline_completed,preemptions,dropped,config_hash";
}

std::string summary_row(const RunMetrics& r, std::string_view config_hash) {
  std::ostringstream o;
  o.precision(10);
  o << r.mean_ttft << ',' << r.p99_ttft << ',' << r.mean_tbt << ',' << r.p99_tbt << ','
    << r.online_tps << ',' << r.offline_tps << ',' << r.total_tps << ',' << r.online_qps << ','
    << r.offline_qps << ',' << r.horizon_s << ',' << r.online_tokens << ','
    << r.offline_tokens << ',' << r.online_completed << ',' << r.offline_completed << ','
    << r.preemptions << ',' << r.dropped << ',' << config_hash;
  return o.str();
}

void write_windows_csv(std::ostream& out, const RunMetrics& r) {
  out << "window_start_s,online_tps,offline_tps,online_qps\n";
  out.precision(10);
  for (const auto& w : r.windows) {
    out << w.start_s << ',' << w.online_tps << ',' << w.offline_tps << ',' << w.online_qps
        << '\n';
  }
}

}  // namespace hygen::metrics
