#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "hygen/batch_features.h"
#include "hygen/rng.h"
#include "hygen/sim/events.h"
#include "hygen/sim/hardware_model.h"
#include "hygen/sim/prefix_cache.h"
#include "hygen/types.h"

namespace hygen::sim {

enum class PreemptionMode : std::uint8_t {
  kPreserve,  // keep computed progress, release KV blocks
  kDiscard,   // release KV blocks and recompute the context on resume
};

struct EngineConfig {
  Blocks kv_blocks_total = 8192;
  Tokens block_size = 16;
  PreemptionMode preemption_mode = PreemptionMode::kPreserve;
  // Extra realized latency charged on the first step after a preserved
  // request resumes; stands in for swap-in cost.
  double readmission_penalty_ms = 0.0;
  std::size_t prefix_cache_max_entries = PrefixCache::kUnlimited;

  void validate() const;
};

enum class Phase : std::uint8_t { kPrefill, kDecode, kDone };

struct RequestProgress {
  Request request;
  // prompt_tokens, or the whole context to rebuild after a discard.
  Tokens prefill_target = 0;
  // Context tokens built by prefill, including prefix-cache credit.
  Tokens prefilled = 0;
  Tokens decode_steps = 0;
  // Tokens emitted to the client; the first comes from the final prefill
  // chunk, the rest from decode steps.
  Tokens generated = 0;
  Blocks blocks_held = 0;
  Tokens cache_credit = 0;
  // Set once the prefix credit has been applied and the path cached.
  bool admitted = false;
  bool pending_penalty = false;
  int preemptions = 0;
  // Prefill tokens computed again because a discard dropped them.
  Tokens recomputed_tokens = 0;
  double first_token_ms = -1.0;

  Phase phase() const {
    if (generated >= request.output_tokens) return Phase::kDone;
    return prefilled < prefill_target ? Phase::kPrefill : Phase::kDecode;
  }
  Tokens context_tokens() const { return prefilled + decode_steps; }
  Tokens remaining_prefill() const { return prefill_target - prefilled; }
};

// One scheduled unit of work for the next iteration. prefill_tokens == 0
// marks a decode step.
struct PlanEntry {
  RequestId id = 0;
  Tokens prefill_tokens = 0;
  double predicted_ms = 0.0;
  // Scheduler bookkeeping; the engine does not trust these.
  RequestClass cls = RequestClass::kOnline;
  Blocks blocks = 0;
  Tokens cache_credit = 0;
  bool from_queue = false;

  bool decode() const { return prefill_tokens == 0; }
};

struct BatchPlan {
  std::vector<PlanEntry> entries;
  // Model prediction for the whole batch.
  double predicted_ms = 0.0;
  // Budgets left after planning.
  double residual_latency_ms = 0.0;
  Tokens residual_chunk = 0;
  Blocks residual_blocks = 0;
  // Online work alone already exceeds the latency budget.
  bool online_overload = false;

  bool empty() const { return entries.empty(); }
};

struct StepResult {
  std::int64_t step = 0;
  double start_ms = 0.0;
  double end_ms = 0.0;
  double latency_ms = 0.0;
  BatchFeatures realized;
  std::vector<Event> events;
  std::vector<RequestId> completed;
  std::vector<RequestId> prefill_completed;
  Tokens credited_tokens = 0;
  Tokens computed_prefill_tokens = 0;
};

// Single inference instance, advanced one iteration at a time.
class Engine {
 public:
  Engine(EngineConfig config, HardwareModel hw);

  // Makes a request known to the engine; it holds no resources yet.
  void add_request(const Request& r);

  // Executes one iteration of `plan`. Throws ContractViolation for entries
  // naming unknown/finished requests or when blocks run out.
  StepResult step(const BatchPlan& plan);

  // Evicts a running request, releasing its blocks. Returns freed blocks.
  Blocks preempt(RequestId id);

  // Longest cached prefix of r's path, in tokens (uncapped).
  Tokens prefix_cache_credit(const Request& r) const;

  // Credit actually applied on admission: the last prompt token is always
  // computed so that the first output token has logits to come from.
  Tokens applied_credit(const Request& r, Tokens raw_credit) const {
    return std::min(raw_credit, r.prompt_tokens - 1);
  }

  bool knows(RequestId id) const { return progress_.count(id) > 0; }
  const RequestProgress& progress(RequestId id) const;

  // Incremental blocks for growing `p`'s context to `new_context` tokens.
  Blocks blocks_to_grow(const RequestProgress& p, Tokens new_context) const {
    return get_num_blocks(new_context, config_.block_size) - p.blocks_held;
  }

  double clock_ms() const { return clock_ms_; }
  // Idles the engine until `t_ms` (never moves the clock backwards).
  void advance_to(double t_ms);

  Blocks free_blocks() const { return free_blocks_; }
  Blocks total_blocks() const { return config_.kv_blocks_total; }
  std::int64_t steps_executed() const { return step_count_; }

  const EngineConfig& config() const { return config_; }
  const HardwareModel& hardware() const { return hw_; }

  PrefixCache& prefix_cache() { return cache_; }
  const PrefixCache& prefix_cache() const { return cache_; }

  Tokens total_credited_tokens() const { return total_credit_; }

 private:
  RequestProgress& mutable_progress(RequestId id);
  void allocate(RequestProgress& p, Blocks n);

  EngineConfig config_;
  HardwareModel hw_;
  Rng rng_;
  PrefixCache cache_;
  std::unordered_map<RequestId, RequestProgress> progress_;
  double clock_ms_ = 0.0;
  Blocks free_blocks_ = 0;
  std::int64_t step_count_ = 0;
  Tokens total_credit_ = 0;
};

}  // namespace hygen::sim
