#include "hygen/scheduler/scheduler.h"

#include <algorithm>
#include <unordered_set>

#include "hygen/errors.h"

namespace hygen::sched {

using predictor::kUnboundedLatency;

const char* to_string(OfflinePolicy p) {
  return p == OfflinePolicy::kPsm ? "psm" : "fcfs";
}

OfflinePolicy parse_offline_policy(std::string_view s) {
  if (s == "fcfs") return OfflinePolicy::kFcfs;
  if (s == "psm") return OfflinePolicy::kPsm;
  throw ValidationError("unknown offline policy '" + std::string(s) + "'");
}

void SchedulerConfig::validate() const {
  if (!(latency_budget_ms > 0.0)) throw ValidationError("latency budget L must be > 0");
  if (chunk_size < 1) throw ValidationError("chunk size C must be >= 1");
  if (offline_reserve_blocks < 0) throw ValidationError("M_off must be >= 0");
  psm.validate();
}

// ---------------------------------------------------------------------------

BatchBuilder::BatchBuilder(const predictor::PredictorModel& model, sim::Engine& engine,
                           double t_, Tokens c_, Blocks m_)
    : t(t_), c(c_), m(m_), model_(model), engine_(engine) {
  engine_.prefix_cache().checkpoint();
}

BatchBuilder::~BatchBuilder() { engine_.prefix_cache().rollback(); }

predictor::PrefillCandidate BatchBuilder::candidate(const sim::RequestProgress& p,
                                                    Tokens* credit) const {
  predictor::PrefillCandidate cand;
  if (!p.admitted) {
    const Tokens raw = engine_.prefix_cache().longest_prefix_tokens(p.request.prompt_path);
    *credit = engine_.applied_credit(p.request, raw);
    cand.remaining_prefill = p.prefill_target - *credit;
    cand.context_tokens = *credit;
    cand.blocks_held = 0;
  } else {
    *credit = 0;
    cand.remaining_prefill = p.remaining_prefill();
    cand.context_tokens = p.context_tokens();
    cand.blocks_held = p.blocks_held;
  }
  return cand;
}

BatchBuilder::Quote BatchBuilder::decode_quote(RequestId id) const {
  const auto& p = engine_.progress(id);
  Quote q;
  q.latency_ms = predictor::predict_decode_marginal(model_, acc);
  q.blocks = std::max<Blocks>(0, engine_.blocks_to_grow(p, p.context_tokens() + 1));
  return q;
}

BatchBuilder::Quote BatchBuilder::prefill_quote(RequestId id, double latency_budget) const {
  const auto& p = engine_.progress(id);
  Quote q;
  const auto cand = candidate(p, &q.credit);
  q.fresh = !p.admitted;
  const auto mt = predictor::get_max_tokens(model_, latency_budget, c, m, cand, acc,
                                            engine_.config().block_size);
  q.tokens = mt.tokens;
  q.latency_ms = mt.latency_ms;
  if (q.tokens > 0) {
    q.blocks = get_num_blocks(cand.context_tokens + q.tokens, engine_.config().block_size) -
               cand.blocks_held;
  }
  return q;
}

Tokens BatchBuilder::prefill_demand(RequestId id) const {
  Tokens credit = 0;
  const auto cand = candidate(engine_.progress(id), &credit);
  return std::max<Tokens>(0, std::min(c, cand.remaining_prefill));
}

Blocks BatchBuilder::blocks_for(RequestId id, Tokens tokens) const {
  Tokens credit = 0;
  const auto cand = candidate(engine_.progress(id), &credit);
  return get_num_blocks(cand.context_tokens + tokens, engine_.config().block_size) -
         cand.blocks_held;
}

void BatchBuilder::take(RequestId id, RequestClass cls, const Quote& q, bool from_queue) {
  sim::PlanEntry e;
  e.id = id;
  e.prefill_tokens = q.tokens;
  e.predicted_ms = q.latency_ms;
  e.cls = cls;
  e.blocks = q.blocks;
  e.cache_credit = q.credit;
  e.from_queue = from_queue;
  entries.push_back(e);
  t -= q.latency_ms;
  c -= q.tokens;
  m -= q.blocks;
  if (q.tokens > 0) {
    acc = acc.with_prefill(q.tokens);
    if (q.fresh) engine_.prefix_cache().admit(engine_.progress(id).request.prompt_path);
  } else {
    acc = acc.with_decode();
  }
}

// ---------------------------------------------------------------------------

Scheduler::Scheduler(SchedulerConfig config, const predictor::PredictorModel& model,
                     sim::Engine& engine)
    : config_(std::move(config)), model_(model), engine_(engine), psm_(config_.psm) {
  config_.validate();
}

void Scheduler::enqueue(const Request& r) {
  if (!engine_.knows(r.id)) engine_.add_request(r);
  if (r.online()) {
    q_on_.push_back(r.id);
  } else if (config_.offline_policy == OfflinePolicy::kPsm) {
    psm_.insert(r);
  } else {
    q_off_fcfs_.push_back(r.id);
  }
}

std::size_t Scheduler::queued_offline() const {
  return resume_.size() + q_off_fcfs_.size() + psm_.size();
}

bool Scheduler::offline_waiting() const { return queued_offline() > 0; }

bool Scheduler::idle() const {
  return q_on_.empty() && !offline_waiting() && r_on_.empty() && r_off_.empty();
}

Scheduler::Where Scheduler::where(RequestId id) const {
  auto in = [id](const auto& c) { return std::find(c.begin(), c.end(), id) != c.end(); };
  if (done_.count(id)) return Where::kDone;
  if (in(r_on_)) return Where::kRunningOnline;
  if (in(r_off_)) return Where::kRunningOffline;
  if (in(q_on_)) return Where::kQueuedOnline;
  if (in(resume_) || in(q_off_fcfs_) || psm_.contains(id)) return Where::kQueuedOffline;
  return Where::kUnknown;
}

std::vector<RequestId> Scheduler::take_preempted() {
  std::vector<RequestId> out;
  out.swap(preempted_);
  return out;
}

void Scheduler::start_offline(RequestId id) {
  r_off_.push_back(id);
  off_by_age_.emplace(engine_.progress(id).request.arrival_ms, id);
}

void Scheduler::preempt_youngest(BatchBuilder& b) {
  const auto victim = *off_by_age_.rbegin();
  off_by_age_.erase(std::prev(off_by_age_.end()));
  const RequestId id = victim.second;
  r_off_.erase(std::find(r_off_.begin(), r_off_.end(), id));
  const Blocks freed = engine_.preempt(id);
  resume_.push_front(id);
  preempted_.push_back(id);

  // Blocks held by offline work count towards m only up to M_off.
  offline_held_ -= freed;
  const Blocks old_reserve = reserve_;
  reserve_ = std::min(config_.offline_reserve_blocks, offline_held_);
  b.m += freed - (old_reserve - reserve_);
}

int Scheduler::preempt_until(BatchBuilder& b, Blocks need) {
  int n = 0;
  while (b.m < need && !off_by_age_.empty()) {
    preempt_youngest(b);
    ++n;
  }
  return n;
}

bool Scheduler::admit_online_decode(BatchBuilder& b, RequestId id, bool from_queue) {
  while (true) {
    const auto q = b.decode_quote(id);
    if (q.blocks <= b.m) {
      b.take(id, RequestClass::kOnline, q, from_queue);
      return true;
    }
    if (preempt_until(b, q.blocks) == 0) return false;
  }
}

bool Scheduler::admit_online_prefill(BatchBuilder& b, RequestId id, bool from_queue) {
  while (true) {
    const auto q = b.prefill_quote(id, kUnboundedLatency);
    if (q.tokens > 0) {
      b.take(id, RequestClass::kOnline, q, from_queue);
      return true;
    }
    // Only memory can stop an online prefill; anything else is final.
    const Tokens want = b.prefill_demand(id);
    if (want <= 0) return false;
    if (preempt_until(b, b.blocks_for(id, want)) == 0) return false;
  }
}

void Scheduler::schedule_online(BatchBuilder& b) {
  const std::vector<RequestId> running = r_on_;
  for (RequestId id : running) {
    if (engine_.progress(id).phase() == sim::Phase::kDecode) {
      admit_online_decode(b, id, false);
    }
  }
  for (RequestId id : running) {
    if (engine_.progress(id).phase() != sim::Phase::kPrefill) continue;
    if (!admit_online_prefill(b, id, false)) return;
  }
  while (!q_on_.empty()) {
    const RequestId id = q_on_.front();
    const bool ok = engine_.progress(id).phase() == sim::Phase::kDecode
                        ? admit_online_decode(b, id, true)
                        : admit_online_prefill(b, id, true);
    if (!ok) return;
    q_on_.pop_front();
    r_on_.push_back(id);
  }
}

bool Scheduler::try_offline(BatchBuilder& b, RequestId id, bool from_queue) {
  if (engine_.progress(id).phase() == sim::Phase::kDecode) {
    const auto q = b.decode_quote(id);
    if (q.latency_ms > b.t || q.blocks > b.m) return false;
    b.take(id, RequestClass::kOffline, q, from_queue);
    return true;
  }
  const auto q = b.prefill_quote(id, b.t);
  if (q.tokens == 0) return false;
  b.take(id, RequestClass::kOffline, q, from_queue);
  return true;
}

void Scheduler::schedule_offline_fcfs(BatchBuilder& b) {
  const std::vector<RequestId> running = r_off_;
  // A decode that does not fit is skipped; later decodes may still fit.
  for (RequestId id : running) {
    if (engine_.progress(id).phase() == sim::Phase::kDecode) try_offline(b, id, false);
  }
  for (RequestId id : running) {
    if (engine_.progress(id).phase() != sim::Phase::kPrefill) continue;
    if (!try_offline(b, id, false)) return;
  }
  for (auto* q : {&resume_, &q_off_fcfs_}) {
    while (!q->empty()) {
      const RequestId id = q->front();
      if (!try_offline(b, id, true)) return;
      q->pop_front();
      start_offline(id);
    }
  }
}

void Scheduler::psm_offline_schedule(BatchBuilder& b) {
  // Running requests in retained order, then preempted ones; the first
  // failure ends this part and moves on to new requests.
  [&] {
    const std::vector<RequestId> running = r_off_;
    for (RequestId id : running) {
      if (!try_offline(b, id, false)) return;
    }
    while (!resume_.empty()) {
      const RequestId id = resume_.front();
      if (!try_offline(b, id, true)) return;
      resume_.pop_front();
      start_offline(id);
    }
  }();

  while (!psm_.empty()) {
    const RequestId id = *psm_.next_fair();
    if (!try_offline(b, id, true)) break;
    psm_.remove(id);
    start_offline(id);
  }
}

sim::BatchPlan Scheduler::finish(BatchBuilder& b) const {
  sim::BatchPlan plan;
  plan.entries = b.entries;
  plan.predicted_ms = predictor::predict(model_, b.acc);
  plan.residual_latency_ms = b.t;
  plan.residual_chunk = b.c;
  plan.residual_blocks = b.m;
  sim::BatchPlan online_only;
  for (const auto& e : b.entries) {
    if (e.cls == RequestClass::kOnline) online_only.entries.push_back(e);
  }
  plan.online_overload =
      predictor::predict(model_, predictor::featurize(online_only)) > config_.latency_budget_ms;
  return plan;
}

sim::BatchPlan Scheduler::two_phase_step() {
  const double t0 = config_.latency_budget_ms - predictor::predict(model_, BatchFeatures{});
  offline_held_ = 0;
  for (RequestId id : r_off_) offline_held_ += engine_.progress(id).blocks_held;
  reserve_ = std::min(config_.offline_reserve_blocks, offline_held_);

  BatchBuilder b(model_, engine_, t0, config_.chunk_size, engine_.free_blocks() + reserve_);
  schedule_online(b);

  // Hand the reserve back to offline work, evicting it if online used it.
  preempt_until(b, reserve_);
  b.m -= reserve_;

  if (config_.offline_policy == OfflinePolicy::kPsm) {
    psm_offline_schedule(b);
  } else {
    schedule_offline_fcfs(b);
  }
  return finish(b);
}

sim::BatchPlan Scheduler::on_arrival_revalidate(sim::BatchPlan plan,
                                                std::span<const RequestId> arrivals) {
  bool any_online = false;
  for (RequestId id : arrivals) any_online |= engine_.progress(id).request.online();
  if (!any_online || q_on_.empty()) return plan;

  const std::size_t first_new = plan.entries.size();
  std::vector<sim::PlanEntry> entries;
  BatchFeatures acc;
  Tokens c = plan.residual_chunk;
  Blocks m = plan.residual_blocks;
  {
    BatchBuilder b(model_, engine_, 0.0, 0, 0);
    Tokens c_off = 0;
    Blocks m_off = 0;
    for (const auto& e : plan.entries) {
      b.entries.push_back(e);
      if (e.decode()) {
        b.acc = b.acc.with_decode();
      } else {
        b.acc = b.acc.with_prefill(e.prefill_tokens);
        const auto& p = engine_.progress(e.id);
        if (!p.admitted) engine_.prefix_cache().admit(p.request.prompt_path);
      }
      if (e.cls == RequestClass::kOffline) {
        c_off += e.prefill_tokens;
        m_off += e.blocks;
      }
    }

    // Waiting online requests in FCFS order may use everything offline holds
    // in this plan.
    while (!q_on_.empty()) {
      const RequestId id = q_on_.front();
      b.c = c + c_off;
      b.m = m + m_off;
      BatchBuilder::Quote q;
      if (engine_.progress(id).phase() == sim::Phase::kDecode) {
        q = b.decode_quote(id);
        if (q.blocks > b.m) break;
      } else {
        q = b.prefill_quote(id, kUnboundedLatency);
        if (q.tokens == 0) break;
      }
      b.take(id, RequestClass::kOnline, q, true);
      c = b.c - c_off;
      m = b.m - m_off;
      q_on_.pop_front();
      r_on_.push_back(id);
    }
    entries = std::move(b.entries);
    acc = b.acc;
  }

  std::vector<std::size_t> keep(entries.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
  std::vector<std::size_t> dropped;
  auto current = [&] {
    sim::BatchPlan p;
    for (auto i : keep) p.entries.push_back(entries[i]);
    return p;
  };
  // A dropped entry's dry-run admission may have fed or evicted cache
  // entries that later quotes saw. Re-derive credit and blocks for what is
  // kept, in plan order; returns the change in blocks.
  auto recredit = [&] {
    auto& cache = engine_.prefix_cache();
    cache.checkpoint();
    Blocks delta = 0;
    for (auto i : keep) {
      auto& e = entries[i];
      const auto& p = engine_.progress(e.id);
      if (e.decode() || p.admitted) continue;
      const Tokens credit = engine_.applied_credit(p.request, cache.admit(p.request.prompt_path));
      const Tokens compute = std::min(e.prefill_tokens, p.prefill_target - credit);
      const Blocks blocks = get_num_blocks(credit + compute, engine_.config().block_size);
      delta += blocks - e.blocks;
      e.blocks = blocks;
      e.cache_credit = credit;
    }
    cache.rollback();
    return delta;
  };

  double t = config_.latency_budget_ms - predictor::predict(model_, acc);
  std::size_t settled = 0;
  while (true) {
    while (t < 0.0 || c < 0 || m < 0) {
      auto victim = keep.end();
      for (auto it = keep.begin(); it != keep.end(); ++it) {
        const auto& e = entries[*it];
        if (e.cls != RequestClass::kOffline) continue;
        if (victim == keep.end() || e.predicted_ms >= entries[*victim].predicted_ms) victim = it;
      }
      if (victim == keep.end()) break;
      const auto& e = entries[*victim];
      c += e.prefill_tokens;
      m += e.blocks;
      dropped.push_back(*victim);
      keep.erase(victim);
      t = config_.latency_budget_ms - predictor::predict(model_, predictor::featurize(current()));
    }
    if (dropped.size() == settled) break;
    settled = dropped.size();
    m -= recredit();
  }
  // Still short: the newest online admissions relied on credit that is gone.
  // Taking them off the end changes no earlier entry's credit.
  while (m < 0 && !keep.empty() && keep.back() >= first_new) {
    const auto& e = entries[keep.back()];
    c += e.prefill_tokens;
    m += e.blocks;
    r_on_.erase(std::find(r_on_.begin(), r_on_.end(), e.id));
    q_on_.push_front(e.id);
    keep.pop_back();
  }

  // Requests started by this plan go back to the head of the resume queue
  // in their original order.
  std::sort(dropped.begin(), dropped.end());
  for (auto it = dropped.rbegin(); it != dropped.rend(); ++it) {
    const auto& e = entries[*it];
    if (!e.from_queue) continue;
    r_off_.erase(std::find(r_off_.begin(), r_off_.end(), e.id));
    off_by_age_.erase({engine_.progress(e.id).request.arrival_ms, e.id});
    resume_.push_front(e.id);
  }

  sim::BatchPlan out = current();
  out.predicted_ms = predictor::predict(model_, predictor::featurize(out));
  out.residual_latency_ms = config_.latency_budget_ms - out.predicted_ms;
  out.residual_chunk = c;
  out.residual_blocks = m;
  sim::BatchPlan online_only;
  for (const auto& e : out.entries) {
    if (e.cls == RequestClass::kOnline) online_only.entries.push_back(e);
  }
  out.online_overload =
      predictor::predict(model_, predictor::featurize(online_only)) > config_.latency_budget_ms;
  return out;
}

void Scheduler::on_step_complete(const sim::StepResult& result) {
  if (result.completed.empty()) return;
  std::unordered_set<RequestId> gone(result.completed.begin(), result.completed.end());
  for (RequestId id : result.completed) done_.insert(id);
  std::erase_if(r_on_, [&](RequestId id) { return gone.count(id) > 0; });
  std::erase_if(r_off_, [&](RequestId id) {
    if (!gone.count(id)) return false;
    off_by_age_.erase({engine_.progress(id).request.arrival_ms, id});
    return true;
  });
}

}  // namespace hygen::sched
