#include <algorithm>
#include <memory>

#include "doctest.h"
#include "helpers.h"
#include "hygen/errors.h"
#include "hygen/rng.h"
#include "hygen/runner/runner.h"
#include "hygen/scheduler/scheduler.h"

using namespace hygen;
using namespace hygen::sched;
using predictor::PredictorModel;
using test::offline;
using test::online;

namespace {

sim::HardwareModel hw() {
  sim::HardwareModel h;
  h.c0 = 5.0;
  h.c1 = 0.02;
  h.c2 = 0.2;
  h.c4 = 0.5;
  h.c5 = 0.05;
  return h;
}

struct Env {
  PredictorModel model = PredictorModel::from_hardware(hw());
  sim::Engine engine;
  std::unique_ptr<Scheduler> sched;

  Env(SchedulerConfig cfg, Blocks blocks = 1024, Tokens block_size = 16)
      : engine(make_cfg(blocks, block_size), hw()) {
    sched = std::make_unique<Scheduler>(cfg, model, engine);
  }

  static sim::EngineConfig make_cfg(Blocks blocks, Tokens bs) {
    sim::EngineConfig c;
    c.kv_blocks_total = blocks;
    c.block_size = bs;
    return c;
  }

  sim::StepResult run(const sim::BatchPlan& plan) {
    auto r = engine.step(plan);
    sched->on_step_complete(r);
    return r;
  }

  sim::StepResult step() { return run(sched->two_phase_step()); }
};

SchedulerConfig cfg(double L, Tokens C = 512, OfflinePolicy pol = OfflinePolicy::kFcfs) {
  SchedulerConfig c;
  c.latency_budget_ms = L;
  c.chunk_size = C;
  c.offline_policy = pol;
  return c;
}

Tokens prefill_sum(const sim::BatchPlan& p) {
  Tokens s = 0;
  for (const auto& e : p.entries) s += e.prefill_tokens;
  return s;
}

bool has_offline(const sim::BatchPlan& p) {
  return std::any_of(p.entries.begin(), p.entries.end(),
                     [](const auto& e) { return e.cls == RequestClass::kOffline; });
}

const sim::PlanEntry* find(const sim::BatchPlan& p, RequestId id) {
  for (const auto& e : p.entries) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_THROWS_AS(cfg(0.0).validate(), ValidationError);
  CHECK_THROWS_AS(cfg(10.0, 0).validate(), ValidationError);
  auto c = cfg(10.0);
  c.offline_reserve_blocks = -1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK(parse_offline_policy("psm") == OfflinePolicy::kPsm);
  CHECK_THROWS_AS(parse_offline_policy("lifo"), ValidationError);
}

TEST_CASE("online prefill ignores the latency budget") {
  Env env(cfg(6.0));
  env.sched->enqueue(online(1, 0.0, 400, 4));
  env.sched->enqueue(offline(2, 50, 4));
  const auto plan = env.sched->two_phase_step();
  REQUIRE(plan.entries.size() == 1);
  CHECK(plan.entries[0].id == 1);
  CHECK(plan.entries[0].prefill_tokens == 400);
  CHECK(plan.online_overload);
  CHECK(plan.residual_latency_ms < 0.0);
}

TEST_CASE("offline fills what the latency budget leaves") {
  // t0 = 20 - 5; decode marginal 0.25; one prefill costs 0.5 + 0.02 l.
  Env env(cfg(20.0));
  env.sched->enqueue(online(1, 0.0, 16, 10));
  env.step();
  env.sched->enqueue(offline(2, 4000, 4));
  const auto plan = env.sched->two_phase_step();
  REQUIRE(plan.entries.size() == 2);
  CHECK(plan.entries[0].id == 1);
  CHECK(plan.entries[0].decode());
  // 15 - 0.25 - 0.5 = 14.25 -> l = 712, capped by C.
  CHECK(plan.entries[1].prefill_tokens == 512);

  Env tight(cfg(10.0));
  tight.sched->enqueue(online(1, 0.0, 16, 10));
  tight.step();
  tight.sched->enqueue(offline(2, 4000, 4));
  const auto p2 = tight.sched->two_phase_step();
  // 5 - 0.25 - 0.5 = 4.25 -> l = 212.
  CHECK(p2.entries[1].prefill_tokens == 212);
  CHECK(p2.predicted_ms <= 10.0 + 1e-9);
}

TEST_CASE("phases share the chunk budget, online first") {
  Env env(cfg(1000.0, 256));
  env.sched->enqueue(offline(1, 300, 4));
  env.sched->enqueue(online(2, 0.0, 200, 4));
  const auto plan = env.sched->two_phase_step();
  REQUIRE(plan.entries.size() == 2);
  CHECK(plan.entries[0].id == 2);
  CHECK(plan.entries[0].prefill_tokens == 200);
  CHECK(plan.entries[1].prefill_tokens == 56);
  CHECK(plan.residual_chunk == 0);
}

TEST_CASE("a huge budget packs the chunk") {
  Env env(cfg(1e6, 512));
  for (RequestId id = 0; id < 10; ++id) env.sched->enqueue(offline(id, 100, 3));
  const auto plan = env.sched->two_phase_step();
  CHECK(prefill_sum(plan) == 512);
  CHECK(plan.entries.size() == 6);
  CHECK(env.sched->fcfs_offline_queue().size() == 4);
}

TEST_CASE("memory pressure preempts the youngest offline request") {
  // 4 blocks of 16; two offline requests hold 2 blocks each.
  Env env(cfg(1e6), 4, 16);
  env.sched->enqueue(offline(1, 24, 50, 0.0));
  env.sched->enqueue(offline(2, 24, 50, 5.0));
  env.step();
  CHECK(env.engine.free_blocks() == 0);
  env.sched->enqueue(online(3, 10.0, 16, 4));
  const auto plan = env.sched->two_phase_step();
  CHECK(env.sched->take_preempted() == std::vector<RequestId>{2});
  CHECK(env.sched->where(2) == Scheduler::Where::kQueuedOffline);
  CHECK(env.sched->resume_queue().front() == 2);
  REQUIRE(find(plan, 3) != nullptr);
  CHECK(find(plan, 3)->prefill_tokens == 16);
  REQUIRE(find(plan, 1) != nullptr);
  CHECK(find(plan, 1)->decode());
  // Resuming 2 needs two blocks; only one is left.
  CHECK(find(plan, 2) == nullptr);
  env.run(plan);
  CHECK(env.engine.free_blocks() == 1);
}

TEST_CASE("online work may not keep the offline reserve") {
  // 10 blocks; offline request holds 4. Online asks for 7.
  for (Blocks reserve : {0, 2}) {
    auto c = cfg(1e6);
    c.offline_reserve_blocks = reserve;
    Env env(c, 10, 16);
    env.sched->enqueue(offline(1, 64, 50));
    env.step();
    env.sched->enqueue(online(2, 1.0, 112, 4));
    const auto plan = env.sched->two_phase_step();
    if (reserve == 0) {
      // Online takes what is free, no eviction.
      CHECK(find(plan, 2)->prefill_tokens == 96);
      CHECK(env.sched->take_preempted().empty());
    } else {
      // Dipping into the reserve forces the offline request out.
      CHECK(find(plan, 2)->prefill_tokens == 112);
      CHECK(env.sched->take_preempted() == std::vector<RequestId>{1});
      CHECK(plan.residual_blocks == 3);
    }
  }
}

TEST_CASE("revalidation without online arrivals keeps the plan") {
  auto c = cfg(12.0);
  c.lookahead = true;
  Env env(c);
  for (RequestId id = 0; id < 4; ++id) env.sched->enqueue(offline(id, 40, 20));
  env.step();
  auto plan = env.sched->two_phase_step();
  env.sched->enqueue(offline(9, 10, 2, 1.0));
  const std::vector<RequestId> arr{9};
  const auto out = env.sched->on_arrival_revalidate(plan, arr);
  REQUIRE(out.entries.size() == plan.entries.size());
  for (std::size_t i = 0; i < out.entries.size(); ++i) CHECK(out.entries[i].id == plan.entries[i].id);
}

TEST_CASE("revalidation admits arrivals and drops offline to fit") {
  auto c = cfg(12.0);
  c.lookahead = true;
  Env env(c);
  for (RequestId id = 0; id < 4; ++id) env.sched->enqueue(offline(id, 40, 20));
  env.step();
  const auto plan = env.sched->two_phase_step();
  CHECK(plan.entries.size() >= 4);
  env.sched->enqueue(online(10, 1.0, 300, 5));
  const std::vector<RequestId> arr{10};
  const auto out = env.sched->on_arrival_revalidate(plan, arr);
  REQUIRE(find(out, 10) != nullptr);
  CHECK(find(out, 10)->prefill_tokens == 300);
  // Online alone is 5 + 0.5 + 6 = 11.5; the 0.5 left holds two decodes.
  CHECK(out.entries.size() == 3);
  CHECK(out.online_overload == false);
  CHECK(out.predicted_ms == doctest::Approx(12.0));
  // Running decodes stay running.
  for (RequestId id = 0; id < 4; ++id) CHECK(env.sched->where(id) == Scheduler::Where::kRunningOffline);
  env.run(out);
}

TEST_CASE("revalidation drops the costliest offline entry first") {
  auto c = cfg(30.0);
  c.lookahead = true;
  Env env(c);
  env.sched->enqueue(offline(0, 40, 20));
  env.step();
  env.sched->enqueue(offline(1, 2000, 4, 1.0));
  const auto plan = env.sched->two_phase_step();
  // Offline decode of 0 and a large chunk of 1.
  REQUIRE(find(plan, 1) != nullptr);
  env.sched->enqueue(online(5, 2.0, 100, 4));
  const std::vector<RequestId> arr{5};
  const auto out = env.sched->on_arrival_revalidate(plan, arr);
  CHECK(find(out, 1) == nullptr);
  CHECK(find(out, 0) != nullptr);
  CHECK(out.predicted_ms <= 30.0 + 1e-9);
  CHECK(env.sched->resume_queue().front() == 1);
  CHECK(env.sched->where(1) == Scheduler::Where::kQueuedOffline);
}

TEST_CASE("revalidation re-credits arrivals after a drop") {
  // Two cache entries. The offline dry run evicts the prefix the online
  // arrival shares with a finished request; dropping the offline entry
  // brings that credit back and the arrival needs more blocks.
  auto run = [](Blocks total) {
    sim::EngineConfig e;
    e.kv_blocks_total = total;
    e.block_size = 16;
    e.prefix_cache_max_entries = 2;
    sim::Engine engine(e, hw());
    const auto model = PredictorModel::from_hardware(hw());
    auto c = cfg(7.0, 64);
    c.lookahead = true;
    Scheduler s(c, model, engine);
    s.enqueue(test::req(0, RequestClass::kOnline, 0.0, 48, 1, {{1, 32}, {2, 16}}));
    s.on_step_complete(engine.step(s.two_phase_step()));
    s.enqueue(test::req(1, RequestClass::kOffline, 0.0, 64, 2, {{3, 32}, {4, 32}}));
    const auto plan = s.two_phase_step();
    REQUIRE(find(plan, 1) != nullptr);
    s.enqueue(test::req(2, RequestClass::kOnline, 1.0, 96, 2, {{1, 32}, {5, 64}}));
    const std::vector<RequestId> arr{2};
    const auto out = s.on_arrival_revalidate(plan, arr);
    CHECK(find(out, 1) == nullptr);
    CHECK(runner::check_plan(out, model, c, engine).empty());
    return std::make_pair(out, s.where(2));
  };
  const auto [roomy, where6] = run(6);
  REQUIRE(find(roomy, 2) != nullptr);
  CHECK(find(roomy, 2)->cache_credit == 32);
  CHECK(find(roomy, 2)->blocks == 6);
  CHECK(roomy.residual_blocks == 0);
  CHECK(where6 == Scheduler::Where::kRunningOnline);
  // One block short: the arrival goes back to the head of the queue.
  const auto [tight, where5] = run(5);
  CHECK(find(tight, 2) == nullptr);
  CHECK(where5 == Scheduler::Where::kQueuedOnline);
}

TEST_CASE("PSM serves shared prefixes together") {
  auto c = cfg(1e6, 512, OfflinePolicy::kPsm);
  Env env(c);
  env.sched->enqueue(test::req(1, RequestClass::kOffline, 0, 64, 2, {{7, 48}, {100, 16}}));
  env.sched->enqueue(test::req(2, RequestClass::kOffline, 0, 64, 2, {{8, 48}, {101, 16}}));
  env.sched->enqueue(test::req(3, RequestClass::kOffline, 0, 64, 2, {{7, 48}, {102, 16}}));
  const auto plan = env.sched->two_phase_step();
  REQUIRE(plan.entries.size() == 3);
  CHECK(plan.entries[0].id == 1);
  CHECK(plan.entries[1].id == 3);
  // 3 is credited with the 48 tokens 1 puts in the cache.
  CHECK(plan.entries[1].prefill_tokens == 16);
  CHECK(plan.entries[1].cache_credit == 48);
  CHECK(plan.entries[2].id == 2);
  const auto r = env.run(plan);
  CHECK(r.credited_tokens == 48);
}

TEST_CASE("budget holds on random instances") {
  Rng rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const double L = rng.uniform(7.0, 40.0);
    auto c = cfg(L, 64 + static_cast<Tokens>(rng.below(448)),
                 rng.uniform() < 0.5 ? OfflinePolicy::kPsm : OfflinePolicy::kFcfs);
    c.offline_reserve_blocks = static_cast<Blocks>(rng.below(8));
    Env env(c, 64 + static_cast<Blocks>(rng.below(128)), 16);
    RequestId id = 0;
    for (int k = 0; k < 12; ++k) {
      env.sched->enqueue(offline(id++, 1 + static_cast<Tokens>(rng.below(200)),
                                 1 + static_cast<Tokens>(rng.below(30)),
                                 static_cast<double>(k)));
    }
    for (int s = 0; s < 60 && !env.sched->idle(); ++s) {
      if (rng.uniform() < 0.2) {
        env.sched->enqueue(online(id++, env.engine.clock_ms(), 1 + static_cast<Tokens>(rng.below(100)),
                                  1 + static_cast<Tokens>(rng.below(10))));
      }
      const auto plan = env.sched->two_phase_step();
      if (has_offline(plan)) CHECK(plan.predicted_ms <= L + 1e-9);
      CHECK(prefill_sum(plan) <= c.chunk_size);
      if (plan.empty()) break;
      const Blocks before = env.engine.free_blocks();
      env.run(plan);
      CHECK(env.engine.free_blocks() >= 0);
      CHECK(before >= 0);
    }
  }
}

TEST_CASE("first plan matches a straight greedy") {
  // Nothing running, FCFS offline with private prompts: each request takes
  // the largest chunk that fits whatever remains of t, c and m.
  Rng rng(31);
  const auto model = PredictorModel::from_hardware(hw());
  for (int trial = 0; trial < 200; ++trial) {
    const double L = rng.uniform(6.0, 30.0);
    const Tokens C = 32 + static_cast<Tokens>(rng.below(480));
    const Blocks M = 4 + static_cast<Blocks>(rng.below(60));
    Env env(cfg(L, C), M, 16);
    std::vector<Tokens> prompts;
    for (RequestId id = 0; id < 8; ++id) {
      prompts.push_back(1 + static_cast<Tokens>(rng.below(300)));
      env.sched->enqueue(offline(id, prompts.back(), 3));
    }
    const auto plan = env.sched->two_phase_step();

    double t = L - 5.0;
    Tokens c = C;
    Blocks m = M;
    BatchFeatures acc;
    std::vector<std::pair<RequestId, Tokens>> want;
    for (RequestId id = 0; id < 8; ++id) {
      Tokens best = 0;
      for (Tokens l = 1; l <= std::min(c, prompts[id]); ++l) {
        const double cost = predictor::predict(model, acc.with_prefill(l)) -
                            predictor::predict(model, acc);
        if (cost <= t && get_num_blocks(l, 16) <= m) best = l;
      }
      if (best == 0) break;
      t -= predictor::predict(model, acc.with_prefill(best)) - predictor::predict(model, acc);
      acc.add_prefill(best);
      c -= best;
      m -= get_num_blocks(best, 16);
      want.push_back({id, best});
    }
    REQUIRE(plan.entries.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(plan.entries[i].id == want[i].first);
      CHECK(plan.entries[i].prefill_tokens == want[i].second);
    }
  }
}

TEST_CASE("completed requests leave the running lists") {
  Env env(cfg(100.0));
  env.sched->enqueue(online(1, 0.0, 8, 1));
  env.sched->enqueue(offline(2, 8, 2));
  env.step();
  CHECK(env.sched->where(1) == Scheduler::Where::kDone);
  env.step();
  CHECK(env.sched->where(2) == Scheduler::Where::kDone);
  CHECK(env.sched->idle());
  CHECK(env.sched->two_phase_step().empty());
}
