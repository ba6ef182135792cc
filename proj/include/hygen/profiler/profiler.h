#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hygen/metrics/metrics.h"
#include "hygen/predictor/predictor.h"
#include "hygen/runner/runner.h"
#include "hygen/types.h"

namespace hygen::profiler {

struct SloSpec {
  metrics::SloMetric metric = metrics::SloMetric::kMeanTbt;
  double tolerance = 0.1;

  void validate() const;
};

struct BudgetSearchConfig {
  double lo_ms = 1e-3;
  double hi_ms = 500.0;
  double eps_ms = 0.5;
  int trials = 3;
  double safety = 1.0;

  void validate() const;
};

// Worst-case slack of one probe: achieved / threshold per SLO, maximised
// over trials. A probe passes when every entry is <= safety.
struct Probe {
  double budget_ms = 0.0;
  bool pass = false;
  std::vector<double> achieved_ratio;
  // Mean over trials of each SLO's achieved value, in ms.
  std::vector<double> achieved_ms;
};

using ComplianceFn = std::function<Probe(double budget_ms)>;

struct SearchResult {
  double budget_ms = 0.0;
  std::vector<Probe> trace;
  std::vector<std::string> warnings;
};

// Probes lo, then bisects [lo, hi] until the bracket is at most eps wide and
// returns the largest passing probe. Throws InfeasibleRangeError if lo fails.
// At most ceil(log2((hi - lo) / eps)) + 1 probes.
SearchResult search_budget(const ComplianceFn& compliant, const BudgetSearchConfig& cfg);

// Everything a profiling or evaluation run needs besides L.
struct Setup {
  RequestStream online;  // baseline workload
  RequestStream hybrid;  // online plus offline
  runner::RunConfig run;
  std::vector<std::uint64_t> seeds;
  double window_s = 10.0;
};

// One simulation with hardware noise and PSM draws keyed to `seed`.
metrics::RunMetrics run_once(const RequestStream& stream, const predictor::PredictorModel& model,
                             runner::RunConfig run, std::uint64_t seed, double window_s,
                             runner::RunOutcome* outcome = nullptr);

// Pure-online run per seed. Throws ValidationError if the stream has
// offline requests or yields no latency samples.
std::vector<metrics::RunMetrics> baseline_run(const Setup& s,
                                              const predictor::PredictorModel& model);

// threshold = baseline * (1 + tolerance), per seed.
double threshold(const metrics::RunMetrics& baseline, const SloSpec& slo);

struct ComplianceResult {
  Probe probe;
  std::vector<metrics::RunMetrics> runs;
};

ComplianceResult check_compliance(const Setup& s, const predictor::PredictorModel& model,
                                  double budget_ms, const std::vector<SloSpec>& slos,
                                  const std::vector<metrics::RunMetrics>& baselines,
                                  double safety = 1.0);

struct ProfileReport {
  std::vector<metrics::RunMetrics> baselines;
  std::vector<SloSpec> slos;
  SearchResult search;
  std::vector<std::uint64_t> seeds;

  std::string to_json() const;
};

ProfileReport profile(const Setup& s, const predictor::PredictorModel& model,
                      const std::vector<SloSpec>& slos, const BudgetSearchConfig& cfg);

}  // namespace hygen::profiler
