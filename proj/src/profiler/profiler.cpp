#include "hygen/profiler/profiler.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hygen/errors.h"
#include "hygen/rng.h"
#include "json.hpp"

namespace hygen::profiler {

using nlohmann::json;

void SloSpec::validate() const {
  if (!(tolerance >= 0.0)) throw ValidationError("SLO tolerance must be >= 0");
}

void BudgetSearchConfig::validate() const {
  if (!(lo_ms < hi_ms)) throw ValidationError("budget search needs lo < hi");
  if (!(lo_ms > 0.0)) throw ValidationError("budget search needs lo > 0");
  if (!(eps_ms > 0.0)) throw ValidationError("budget search needs eps > 0");
  if (trials < 1) throw ValidationError("budget search needs trials >= 1");
  if (!(safety > 0.0)) throw ValidationError("budget search needs safety > 0");
}

namespace {

std::string describe(const std::vector<Probe>& trace) {
  std::ostringstream o;
  for (const auto& p : trace) {
    o << " L=" << p.budget_ms << (p.pass ? " pass" : " fail");
    for (double r : p.achieved_ratio) o << " " << r;
    o << ";";
  }
  return o.str();
}

void monotonicity_warnings(SearchResult& r) {
  auto trace = r.trace;
  std::sort(trace.begin(), trace.end(),
            [](const Probe& a, const Probe& b) { return a.budget_ms < b.budget_ms; });
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const auto& lo = trace[i - 1];
    const auto& hi = trace[i];
    if (hi.pass && !lo.pass) {
      r.warnings.push_back("compliance not monotone: L=" + std::to_string(hi.budget_ms) +
                           " passes but L=" + std::to_string(lo.budget_ms) + " fails");
    }
    for (std::size_t k = 0; k < std::min(lo.achieved_ms.size(), hi.achieved_ms.size()); ++k) {
      // Two percent of slack absorbs run-to-run noise.
      if (hi.achieved_ms[k] < lo.achieved_ms[k] * 0.98) {
        r.warnings.push_back("SLO " + std::to_string(k) + " metric falls from " +
                             std::to_string(lo.achieved_ms[k]) + " to " +
                             std::to_string(hi.achieved_ms[k]) + " as L grows from " +
                             std::to_string(lo.budget_ms) + " to " +
                             std::to_string(hi.budget_ms));
      }
    }
  }
}

}  // namespace

SearchResult search_budget(const ComplianceFn& compliant, const BudgetSearchConfig& cfg) {
  cfg.validate();
  SearchResult r;
  r.trace.push_back(compliant(cfg.lo_ms));
  if (!r.trace.back().pass) {
    throw InfeasibleRangeError("lowest budget " + std::to_string(cfg.lo_ms) +
                               " ms is not compliant; probes:" + describe(r.trace));
  }
  double good = cfg.lo_ms;
  double bad = cfg.hi_ms;
  while (bad - good > cfg.eps_ms) {
    const double mid = good + (bad - good) / 2.0;
    r.trace.push_back(compliant(mid));
    (r.trace.back().pass ? good : bad) = mid;
  }
  r.budget_ms = good;
  monotonicity_warnings(r);
  return r;
}

metrics::RunMetrics run_once(const RequestStream& stream, const predictor::PredictorModel& model,
                             runner::RunConfig run, std::uint64_t seed, double window_s,
                             runner::RunOutcome* outcome) {
  run.hardware.seed = derive_seed(seed, 1);
  run.scheduler.psm.seed = derive_seed(seed, 2);
  metrics::MetricsCollector collector(window_s);
  const auto o = runner::simulate(stream, model, run, collector);
  if (outcome) *outcome = o;
  const double horizon = run.horizon_ms >= 0.0 ? run.horizon_ms : stream.duration_ms;
  return collector.finish(horizon);
}

std::vector<metrics::RunMetrics> baseline_run(const Setup& s,
                                              const predictor::PredictorModel& model) {
  for (const auto& r : s.online.requests) {
    if (!r.online()) throw ValidationError("baseline workload contains offline requests");
  }
  if (s.seeds.empty()) throw ValidationError("profiling needs at least one seed");
  std::vector<metrics::RunMetrics> out;
  for (auto seed : s.seeds) {
    out.push_back(run_once(s.online, model, s.run, seed, s.window_s));
    if (out.back().ttft_samples == 0) {
      throw ValidationError("baseline run produced no TTFT samples");
    }
  }
  return out;
}

double threshold(const metrics::RunMetrics& baseline, const SloSpec& slo) {
  return metrics::metric_value(baseline, slo.metric) * (1.0 + slo.tolerance);
}

ComplianceResult check_compliance(const Setup& s, const predictor::PredictorModel& model,
                                  double budget_ms, const std::vector<SloSpec>& slos,
                                  const std::vector<metrics::RunMetrics>& baselines,
                                  double safety) {
  if (!(budget_ms > 0.0)) throw ValidationError("budget must be > 0");
  if (baselines.size() != s.seeds.size()) {
    throw ValidationError("one baseline per seed is required");
  }
  ComplianceResult res;
  res.probe.budget_ms = budget_ms;
  res.probe.achieved_ratio.assign(slos.size(), 0.0);
  res.probe.achieved_ms.assign(slos.size(), 0.0);
  runner::RunConfig run = s.run;
  run.scheduler.latency_budget_ms = budget_ms;
  for (std::size_t i = 0; i < s.seeds.size(); ++i) {
    res.runs.push_back(run_once(s.hybrid, model, run, s.seeds[i], s.window_s));
    for (std::size_t k = 0; k < slos.size(); ++k) {
      const double achieved = metrics::metric_value(res.runs.back(), slos[k].metric);
      double ratio = achieved / threshold(baselines[i], slos[k]);
      if (std::isnan(ratio)) ratio = std::numeric_limits<double>::infinity();
      res.probe.achieved_ratio[k] = std::max(res.probe.achieved_ratio[k], ratio);
      res.probe.achieved_ms[k] += achieved / static_cast<double>(s.seeds.size());
    }
  }
  res.probe.pass = std::all_of(res.probe.achieved_ratio.begin(), res.probe.achieved_ratio.end(),
                               [&](double r) { return r <= safety; });
  return res;
}

ProfileReport profile(const Setup& s, const predictor::PredictorModel& model,
                      const std::vector<SloSpec>& slos, const BudgetSearchConfig& cfg) {
  cfg.validate();
  if (slos.empty()) throw ValidationError("profiling needs at least one SLO");
  for (const auto& slo : slos) slo.validate();
  if (s.seeds.size() < static_cast<std::size_t>(cfg.trials)) {
    throw ValidationError("profiling needs " + std::to_string(cfg.trials) + " seeds");
  }
  Setup trial = s;
  trial.seeds.resize(static_cast<std::size_t>(cfg.trials));

  ProfileReport report;
  report.slos = slos;
  report.seeds = trial.seeds;
  report.baselines = baseline_run(trial, model);
  report.search = search_budget(
      [&](double budget) {
        return check_compliance(trial, model, budget, slos, report.baselines, cfg.safety).probe;
      },
      cfg);
  return report;
}

std::string ProfileReport::to_json() const {
  json j;
  j["budget_ms"] = search.budget_ms;
  j["seeds"] = seeds;
  json b = json::array();
  for (const auto& m : baselines) {
    b.push_back({{"mean_ttft", m.mean_ttft}, {"p99_ttft", m.p99_ttft},
                 {"mean_tbt", m.mean_tbt}, {"p99_tbt", m.p99_tbt},
                 {"online_tps", m.online_tps}});
  }
  j["baseline"] = b;
  json sl = json::array();
  for (const auto& slo : slos) {
    json thr = json::array();
    for (const auto& m : baselines) thr.push_back(threshold(m, slo));
    sl.push_back({{"metric", std::string(metrics::to_string(slo.metric))},
                  {"tolerance", slo.tolerance},
                  {"threshold_ms", thr}});
  }
  j["slos"] = sl;
  json tr = json::array();
  for (const auto& p : search.trace) {
    tr.push_back({{"budget_ms", p.budget_ms}, {"pass", p.pass},
                  {"achieved_ratio", p.achieved_ratio}, {"achieved_ms", p.achieved_ms}});
  }
  j["probes"] = tr;
  j["warnings"] = search.warnings;
  return j.dump(2);
}

}  // namespace hygen::profiler
