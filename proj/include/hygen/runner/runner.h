#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "hygen/predictor/predictor.h"
#include "hygen/scheduler/scheduler.h"
#include "hygen/sim/engine.h"
#include "hygen/sim/events.h"
#include "hygen/types.h"

namespace hygen::runner {

struct RunConfig {
  sim::EngineConfig engine;
  sim::HardwareModel hardware;
  sched::SchedulerConfig scheduler;
  // Offline work stops being scheduled once the clock passes this and no
  // online work is left. Negative means the stream's duration.
  double horizon_ms = -1.0;
  std::int64_t max_steps = 100'000'000;
};

struct RunOutcome {
  std::int64_t steps = 0;
  double end_ms = 0.0;
  std::int64_t plans_checked = 0;
  // Plans carrying offline work; these must respect L.
  std::int64_t offline_plans = 0;
  // Steps whose online work alone was predicted above L.
  std::int64_t online_overload_steps = 0;
  std::int64_t preemptions = 0;
  Tokens credited_tokens = 0;
  Tokens computed_prefill_tokens = 0;
  double sched_total_us = 0.0;
  double sched_max_us = 0.0;
};

// Empty string when the plan honours the budget contract, otherwise a
// description of what is broken. Prefix credit is recomputed from the
// engine's cache; scheduler bookkeeping in the entries is not trusted.
std::string check_plan(const sim::BatchPlan& plan, const predictor::PredictorModel& model,
                       const sched::SchedulerConfig& cfg, sim::Engine& engine);

// Runs the whole stream. Throws InvariantBreach if a plan breaks the budget
// contract or the run stalls with work left.
RunOutcome simulate(const RequestStream& stream, const predictor::PredictorModel& model,
                    const RunConfig& cfg, sim::EventSink& sink);

class TeeSink : public sim::EventSink {
 public:
  TeeSink(std::initializer_list<sim::EventSink*> sinks) : sinks_(sinks) {}
  void on_event(const sim::Event& e) override {
    for (auto* s : sinks_) s->on_event(e);
  }
  void on_step(const sim::StepRecord& r) override {
    for (auto* s : sinks_) s->on_step(r);
  }

 private:
  std::vector<sim::EventSink*> sinks_;
};

class NullSink : public sim::EventSink {
 public:
  void on_event(const sim::Event&) override {}
};

}  // namespace hygen::runner
