#include "hygen/runner/runner.h"

#include <chrono>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "hygen/errors.h"

namespace hygen::runner {

std::string check_plan(const sim::BatchPlan& plan, const predictor::PredictorModel& model,
                       const sched::SchedulerConfig& cfg, sim::Engine& engine) {
  std::ostringstream why;
  bool has_offline = false;
  Tokens chunk = 0;
  for (const auto& e : plan.entries) {
    has_offline |= engine.progress(e.id).request.cls == RequestClass::kOffline;
    chunk += e.prefill_tokens;
  }
  const double predicted = predictor::predict(model, predictor::featurize(plan));
  const double slack = 1e-9 * std::max(1.0, cfg.latency_budget_ms);
  if (has_offline && predicted > cfg.latency_budget_ms + slack) {
    why << "predicted " << predicted << " ms exceeds L=" << cfg.latency_budget_ms << "; ";
  }
  if (chunk > cfg.chunk_size) {
    why << "prefill tokens " << chunk << " exceed C=" << cfg.chunk_size << "; ";
  }

  auto& cache = engine.prefix_cache();
  cache.checkpoint();
  Blocks demand = 0;
  for (const auto& e : plan.entries) {
    const auto& p = engine.progress(e.id);
    if (e.decode()) {
      demand += std::max<Blocks>(0, engine.blocks_to_grow(p, p.context_tokens() + 1));
      continue;
    }
    Tokens context = p.context_tokens();
    Tokens remaining = p.remaining_prefill();
    if (!p.admitted) {
      const Tokens credit = engine.applied_credit(p.request, cache.admit(p.request.prompt_path));
      context = credit;
      remaining = p.prefill_target - credit;
    }
    const Tokens compute = std::min(e.prefill_tokens, remaining);
    demand += std::max<Blocks>(0, engine.blocks_to_grow(p, context + compute));
  }
  cache.rollback();
  if (demand > engine.free_blocks()) {
    why << "block demand " << demand << " exceeds free " << engine.free_blocks() << "; ";
  }
  return why.str();
}

RunOutcome simulate(const RequestStream& stream, const predictor::PredictorModel& model,
                    const RunConfig& cfg, sim::EventSink& sink) {
  stream.validate();
  cfg.scheduler.validate();
  for (const auto& r : stream.requests) {
    if (get_num_blocks(r.prompt_tokens + r.output_tokens, cfg.engine.block_size) >
        cfg.engine.kv_blocks_total) {
      throw ValidationError("request " + std::to_string(r.id) + " cannot fit in KV memory");
    }
  }

  sim::Engine engine(cfg.engine, cfg.hardware);
  sched::Scheduler sched(cfg.scheduler, model, engine);
  const double horizon = cfg.horizon_ms >= 0.0 ? cfg.horizon_ms : stream.duration_ms;

  std::int64_t online_total = 0, offline_total = 0;
  for (const auto& r : stream.requests) (r.online() ? online_total : offline_total)++;
  std::int64_t online_done = 0, offline_done = 0;

  const auto& reqs = stream.requests;
  std::size_t next = 0;
  auto reveal = [&](std::vector<RequestId>& revealed) {
    while (next < reqs.size() && reqs[next].arrival_ms <= engine.clock_ms()) {
      const auto& r = reqs[next++];
      sched.enqueue(r);
      sink.on_event({r.arrival_ms, sim::EventKind::kArrive, r.id, r.cls});
      revealed.push_back(r.id);
    }
  };
  auto online_left = [&] { return online_done < online_total; };

  RunOutcome out;
  std::vector<RequestId> revealed;
  while (true) {
    if (!online_left() && (offline_done == offline_total || engine.clock_ms() >= horizon)) {
      break;
    }
    if (out.steps >= cfg.max_steps) throw InvariantBreach("step limit reached");

    revealed.clear();
    const auto t0 = std::chrono::steady_clock::now();
    sim::BatchPlan plan;
    if (cfg.scheduler.lookahead) {
      plan = sched.two_phase_step();
      reveal(revealed);
      plan = sched.on_arrival_revalidate(std::move(plan), revealed);
    } else {
      reveal(revealed);
      plan = sched.two_phase_step();
    }
    const double us =
        std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    out.sched_total_us += us;
    out.sched_max_us = std::max(out.sched_max_us, us);

    for (RequestId id : sched.take_preempted()) {
      ++out.preemptions;
      sink.on_event({engine.clock_ms(), sim::EventKind::kPreempt, id,
                     engine.progress(id).request.cls});
    }

    if (plan.empty()) {
      if (cfg.scheduler.lookahead && !revealed.empty()) continue;
      const bool online_work =
          !sched.queued_online().empty() || !sched.running_online().empty();
      if (next < reqs.size()) {
        engine.advance_to(reqs[next].arrival_ms);
        continue;
      }
      if (online_work) {
        throw InvariantBreach("online requests remain but nothing can be scheduled");
      }
      if (!sched.running_offline().empty()) {
        throw InvariantBreach("running offline requests but nothing can be scheduled");
      }
      // Offline work that cannot fit under L even in an empty batch.
      engine.advance_to(std::max(horizon, engine.clock_ms()));
      break;
    }

    ++out.plans_checked;
    if (const auto why = check_plan(plan, model, cfg.scheduler, engine); !why.empty()) {
      throw InvariantBreach("budget contract broken at step " + std::to_string(out.steps) +
                            " t=" + std::to_string(engine.clock_ms()) + ": " + why);
    }
    bool has_offline = false;
    for (const auto& e : plan.entries) has_offline |= e.cls == RequestClass::kOffline;
    out.offline_plans += has_offline ? 1 : 0;
    out.online_overload_steps += plan.online_overload ? 1 : 0;

    const auto result = engine.step(plan);
    sink.on_step({result.start_ms, result.step, result.realized, result.latency_ms,
                  plan.predicted_ms});
    for (const auto& e : result.events) sink.on_event(e);
    for (RequestId id : result.completed) {
      (engine.progress(id).request.online() ? online_done : offline_done)++;
    }
    out.credited_tokens += result.credited_tokens;
    out.computed_prefill_tokens += result.computed_prefill_tokens;
    sched.on_step_complete(result);
    ++out.steps;
  }
  out.end_ms = engine.clock_ms();
  return out;
}

}  // namespace hygen::runner
