#include "hygen/sim/engine.h"

#include <algorithm>
#include <unordered_set>

#include "hygen/errors.h"

namespace hygen::sim {

void EngineConfig::validate() const {
  if (kv_blocks_total < 1) throw ValidationError("kv_blocks_total must be >= 1");
  if (block_size < 1) throw ValidationError("block_size must be >= 1");
  if (readmission_penalty_ms < 0.0) {
    throw ValidationError("readmission_penalty_ms must be >= 0");
  }
}

Engine::Engine(EngineConfig config, HardwareModel hw)
    : config_(config),
      hw_(hw),
      rng_(hw.seed),
      cache_(config.prefix_cache_max_entries),
      free_blocks_(config.kv_blocks_total) {
  config_.validate();
  hw_.validate();
}

void Engine::add_request(const Request& r) {
  r.validate();
  RequestProgress p;
  p.request = r;
  p.prefill_target = r.prompt_tokens;
  if (!progress_.emplace(r.id, std::move(p)).second) {
    throw ContractViolation("request " + std::to_string(r.id) + " added twice");
  }
}

const RequestProgress& Engine::progress(RequestId id) const {
  auto it = progress_.find(id);
  if (it == progress_.end()) {
    throw ContractViolation("unknown request " + std::to_string(id));
  }
  return it->second;
}

RequestProgress& Engine::mutable_progress(RequestId id) {
  auto it = progress_.find(id);
  if (it == progress_.end()) {
    throw ContractViolation("unknown request " + std::to_string(id));
  }
  return it->second;
}

Tokens Engine::prefix_cache_credit(const Request& r) const {
  return cache_.longest_prefix_tokens(r.prompt_path);
}

void Engine::advance_to(double t_ms) { clock_ms_ = std::max(clock_ms_, t_ms); }

void Engine::allocate(RequestProgress& p, Blocks n) {
  if (n <= 0) return;
  if (n > free_blocks_) {
    throw ContractViolation("request " + std::to_string(p.request.id) + " needs " +
                            std::to_string(n) + " blocks, only " +
                            std::to_string(free_blocks_) + " free");
  }
  free_blocks_ -= n;
  p.blocks_held += n;
}

StepResult Engine::step(const BatchPlan& plan) {
  StepResult result;
  result.step = step_count_;
  result.start_ms = clock_ms_;

  std::unordered_set<RequestId> seen;
  seen.reserve(plan.entries.size());
  for (const auto& e : plan.entries) {
    const auto& p = progress(e.id);
    if (!seen.insert(e.id).second) {
      throw ContractViolation("request " + std::to_string(e.id) +
                              " appears twice in one plan");
    }
    if (e.prefill_tokens < 0) throw ContractViolation("negative prefill tokens");
    const Phase phase = p.phase();
    if (phase == Phase::kDone) {
      throw ContractViolation("request " + std::to_string(e.id) + " is done");
    }
    if (e.decode() && phase != Phase::kDecode) {
      throw ContractViolation("decode entry for request " + std::to_string(e.id) +
                              " still in prefill");
    }
    if (!e.decode() && phase != Phase::kPrefill) {
      throw ContractViolation("prefill entry for request " + std::to_string(e.id) +
                              " already in decode");
    }
  }

  double penalty_ms = 0.0;
  BatchFeatures realized;
  std::vector<RequestProgress*> prefills;
  std::vector<RequestProgress*> decodes;
  for (const auto& e : plan.entries) {
    RequestProgress& p = mutable_progress(e.id);
    if (p.pending_penalty) {
      penalty_ms += config_.readmission_penalty_ms;
      p.pending_penalty = false;
    }
    if (e.decode()) {
      allocate(p, blocks_to_grow(p, p.context_tokens() + 1));
      p.decode_steps += 1;
      p.generated += 1;
      realized.add_decode();
      decodes.push_back(&p);
      continue;
    }
    if (!p.admitted) {
      const Tokens raw = cache_.admit(p.request.prompt_path);
      p.cache_credit = applied_credit(p.request, raw);
      p.prefilled = p.cache_credit;
      p.admitted = true;
      result.credited_tokens += p.cache_credit;
      total_credit_ += p.cache_credit;
    }
    const Tokens compute = std::min(e.prefill_tokens, p.remaining_prefill());
    allocate(p, blocks_to_grow(p, p.context_tokens() + compute));
    p.prefilled += compute;
    realized.add_prefill(compute);
    result.computed_prefill_tokens += compute;
    prefills.push_back(&p);
  }

  result.realized = realized;
  result.latency_ms = true_batch_latency(hw_, realized, rng_) + penalty_ms;
  clock_ms_ += result.latency_ms;
  result.end_ms = clock_ms_;
  ++step_count_;

  auto emit = [&](EventKind kind, const RequestProgress& p) {
    result.events.push_back({clock_ms_, kind, p.request.id, p.request.cls});
  };
  auto finish_if_done = [&](RequestProgress& p) {
    if (p.phase() != Phase::kDone) return;
    free_blocks_ += p.blocks_held;
    p.blocks_held = 0;
    result.completed.push_back(p.request.id);
    emit(EventKind::kComplete, p);
  };

  // Plan order is preserved for emissions so logs are reproducible.
  std::size_t pi = 0;
  std::size_t di = 0;
  for (const auto& e : plan.entries) {
    if (e.decode()) {
      RequestProgress& p = *decodes[di++];
      emit(EventKind::kToken, p);
      finish_if_done(p);
      continue;
    }
    RequestProgress& p = *prefills[pi++];
    if (p.remaining_prefill() > 0) continue;
    result.prefill_completed.push_back(p.request.id);
    if (p.generated == 0) {
      p.generated = 1;
      p.first_token_ms = clock_ms_;
      emit(EventKind::kFirstToken, p);
    }
    finish_if_done(p);
  }
  return result;
}

Blocks Engine::preempt(RequestId id) {
  RequestProgress& p = mutable_progress(id);
  if (p.phase() == Phase::kDone || !p.admitted) {
    throw ContractViolation("request " + std::to_string(id) + " is not running");
  }
  const Blocks freed = p.blocks_held;
  free_blocks_ += freed;
  p.blocks_held = 0;
  p.preemptions += 1;
  if (config_.preemption_mode == PreemptionMode::kDiscard) {
    // Decoded context has to be rebuilt along with the whole prompt.
    p.recomputed_tokens += p.context_tokens();
    p.prefill_target += p.decode_steps;
    p.prefilled = 0;
    p.decode_steps = 0;
  } else if (config_.readmission_penalty_ms > 0.0) {
    p.pending_penalty = true;
  }
  return freed;
}

}  // namespace hygen::sim
