#pragma once

#include <cstdint>
#include <deque>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "hygen/batch_features.h"
#include "hygen/predictor/predictor.h"
#include "hygen/psm/psm.h"
#include "hygen/sim/engine.h"
#include "hygen/types.h"

namespace hygen::sched {

enum class OfflinePolicy : std::uint8_t { kFcfs, kPsm };

const char* to_string(OfflinePolicy p);
OfflinePolicy parse_offline_policy(std::string_view s);

struct SchedulerConfig {
  double latency_budget_ms = 50.0;    // L
  Tokens chunk_size = 512;            // C
  Blocks offline_reserve_blocks = 0;  // M_off
  OfflinePolicy offline_policy = OfflinePolicy::kFcfs;
  psm::PsmConfig psm;
  // Plan the next step before the current step's arrivals are visible,
  // then patch the plan for them.
  bool lookahead = false;

  void validate() const;
};

// Budgets and the partial plan shared by both scheduling phases. Prefix
// credit of first admissions is dry-run against the engine's cache and
// undone when the builder goes away.
class BatchBuilder {
 public:
  BatchBuilder(const predictor::PredictorModel& model, sim::Engine& engine,
               double t, Tokens c, Blocks m);
  ~BatchBuilder();
  BatchBuilder(const BatchBuilder&) = delete;
  BatchBuilder& operator=(const BatchBuilder&) = delete;

  struct Quote {
    Tokens tokens = 0;  // prefill chunk; 0 for a decode
    double latency_ms = 0.0;
    Blocks blocks = 0;
    Tokens credit = 0;
    bool fresh = false;  // first admission, consumes prefix credit
  };

  Quote decode_quote(RequestId id) const;
  // Largest chunk whose marginal fits `latency_budget`; tokens == 0 if none.
  Quote prefill_quote(RequestId id, double latency_budget) const;
  // Chunk the request could take if memory were unlimited.
  Tokens prefill_demand(RequestId id) const;
  // Blocks needed to extend the request by `tokens` prefill tokens.
  Blocks blocks_for(RequestId id, Tokens tokens) const;

  void take(RequestId id, RequestClass cls, const Quote& q, bool from_queue);

  double t;
  Tokens c;
  Blocks m;
  BatchFeatures acc;
  std::vector<sim::PlanEntry> entries;

 private:
  predictor::PrefillCandidate candidate(const sim::RequestProgress& p, Tokens* credit) const;

  const predictor::PredictorModel& model_;
  sim::Engine& engine_;
};

// Two-phase SLO-aware scheduler over one engine. The scheduler owns the
// queues and running lists; the engine owns request progress and memory.
class Scheduler {
 public:
  Scheduler(SchedulerConfig config, const predictor::PredictorModel& model,
            sim::Engine& engine);

  // Registers the request with the engine and queues it.
  void enqueue(const Request& r);

  sim::BatchPlan two_phase_step();

  // Admits newly revealed online requests into a precomputed plan, then
  // drops offline entries (largest predicted cost first) until latency,
  // chunk and memory budgets all hold again.
  sim::BatchPlan on_arrival_revalidate(sim::BatchPlan plan,
                                       std::span<const RequestId> arrivals);

  void on_step_complete(const sim::StepResult& result);

  // Requests preempted since the last call.
  std::vector<RequestId> take_preempted();

  enum class Where : std::uint8_t {
    kUnknown, kQueuedOnline, kQueuedOffline, kRunningOnline, kRunningOffline, kDone
  };
  Where where(RequestId id) const;

  const SchedulerConfig& config() const { return config_; }
  const std::vector<RequestId>& running_online() const { return r_on_; }
  const std::vector<RequestId>& running_offline() const { return r_off_; }
  const std::deque<RequestId>& queued_online() const { return q_on_; }
  // Preempted offline requests, served before anything new.
  const std::deque<RequestId>& resume_queue() const { return resume_; }
  const std::deque<RequestId>& fcfs_offline_queue() const { return q_off_fcfs_; }
  const psm::PsmQueue& psm_queue() const { return psm_; }
  std::size_t queued_offline() const;
  bool idle() const;

 private:
  void schedule_online(BatchBuilder& b);
  bool admit_online_decode(BatchBuilder& b, RequestId id, bool from_queue);
  bool admit_online_prefill(BatchBuilder& b, RequestId id, bool from_queue);
  void schedule_offline_fcfs(BatchBuilder& b);
  void psm_offline_schedule(BatchBuilder& b);
  // Tries one offline request at the given gate; false on failure.
  bool try_offline(BatchBuilder& b, RequestId id, bool from_queue);

  // Preempts offline requests, youngest first, until b.m >= need or none
  // remain. Returns the number preempted.
  int preempt_until(BatchBuilder& b, Blocks need);
  void preempt_youngest(BatchBuilder& b);

  void start_offline(RequestId id);
  sim::BatchPlan finish(BatchBuilder& b) const;
  bool offline_waiting() const;

  SchedulerConfig config_;
  const predictor::PredictorModel& model_;
  sim::Engine& engine_;

  std::deque<RequestId> q_on_;
  std::deque<RequestId> resume_;
  std::deque<RequestId> q_off_fcfs_;
  psm::PsmQueue psm_;
  std::vector<RequestId> r_on_;
  std::vector<RequestId> r_off_;
  // (arrival_ms, id) of running offline requests; youngest is the last.
  std::set<std::pair<double, RequestId>> off_by_age_;
  std::set<RequestId> done_;

  Blocks offline_held_ = 0;
  Blocks reserve_ = 0;
  std::vector<RequestId> preempted_;
};

}  // namespace hygen::sched
