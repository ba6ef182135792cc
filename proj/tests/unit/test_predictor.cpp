#include <cmath>
#include <sstream>

#include "doctest.h"
#include "hygen/errors.h"
#include "hygen/predictor/predictor.h"
#include "hygen/rng.h"

using namespace hygen;
using namespace hygen::predictor;

namespace {

sim::HardwareModel ref_hw(double noise = 0.0) {
  sim::HardwareModel hw;
  hw.c0 = 10.0;
  hw.c1 = 0.05;
  hw.c2 = 0.1;
  hw.c3 = 2e-5;
  hw.c4 = 0.5;
  hw.c5 = 0.05;
  hw.noise_pct = noise;
  hw.seed = 3;
  return hw;
}

// Straight scan over every l; the solver must agree with it.
MaxTokens scan_max_tokens(const PredictorModel& m, double budget, Tokens chunk, Blocks blocks,
                          const PrefillCandidate& r, const BatchFeatures& acc, Tokens bs) {
  MaxTokens best;
  const double base = predict(m, acc);
  const Tokens mem = (r.blocks_held + blocks) * bs - r.context_tokens;
  for (Tokens l = 1; l <= std::min(chunk, r.remaining_prefill); ++l) {
    if (l > mem) break;
    const double c = std::max(0.0, predict(m, acc.with_prefill(l)) - base);
    if (c <= budget) best = {l, c};
  }
  return best;
}

}  // namespace

TEST_CASE("featurize counts planned tokens") {
  sim::BatchPlan plan;
  plan.entries = {{1, 100}, {2, 0}, {3, 28}, {4, 0}, {5, 0}};
  const auto f = featurize(plan);
  CHECK(f.S_p == 128);
  CHECK(f.S_p2 == 128 * 128);
  CHECK(f.N_p == 2);
  CHECK(f.S_d == 3);
  CHECK(f.N_d == 3);
  CHECK(f.S_d2 == 9);
  CHECK(featurize({}).empty());
}

TEST_CASE("decode marginal") {
  PredictorModel m;
  m.intercept = 4.0;
  m.weights = {0.0, 0.2, 0.0, 0.0, 0.0, 0.05};
  CHECK(predict_decode_marginal(m, BatchFeatures::from_counts(64, 1, 5)) == doctest::Approx(0.25));

  // A negative S_d^2 weight can make the raw marginal negative; it is floored.
  m.weights = {0.0, 0.0, 0.0, -1.0, 0.0, 0.0};
  m.intercept = 1000.0;
  CHECK(predict_decode_marginal(m, BatchFeatures::from_counts(0, 0, 10)) == 0.0);
}

TEST_CASE("prediction is floored at zero") {
  PredictorModel m;
  m.intercept = -5.0;
  CHECK(predict(m, {}) == 0.0);
  m.enabled[0] = false;
  m.intercept = 0.0;
  m.weights[0] = 1.0;
  CHECK(predict(m, BatchFeatures::from_counts(10, 1, 0)) == 0.0);
}

TEST_CASE("marginals add up") {
  const auto m = PredictorModel::from_hardware(ref_hw());
  BatchFeatures acc;
  double sum = predict(m, acc);
  for (int i = 0; i < 5; ++i) {
    sum += predict_decode_marginal(m, acc);
    acc.add_decode();
  }
  sum += predict_prefill_marginal(m, acc, 300);
  acc.add_prefill(300);
  sum += predict_prefill_marginal(m, acc, 50);
  acc = acc.with_prefill(50);
  CHECK(sum == doctest::Approx(predict(m, acc)));
}

TEST_CASE("get_max_tokens matches a linear scan") {
  Rng rng(77);
  auto ri = [&](std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
  };
  for (int trial = 0; trial < 400; ++trial) {
    PredictorModel m;
    m.intercept = rng.uniform(0.0, 10.0);
    m.weights = {rng.uniform(0.0, 0.2), rng.uniform(0.0, 0.3), rng.uniform(0.0, 1e-4),
                 rng.uniform(-1e-3, 1e-3), rng.uniform(0.0, 2.0), rng.uniform(0.0, 0.1)};
    const auto acc = BatchFeatures::from_counts(ri(0, 300), ri(0, 2),
                                                ri(0, 20));
    PrefillCandidate r;
    r.remaining_prefill = ri(1, 600);
    r.context_tokens = ri(0, 40);
    r.blocks_held = get_num_blocks(r.context_tokens, 16);
    const Tokens chunk = ri(1, 512);
    const Blocks blocks = ri(0, 40);
    const double budget = rng.uniform(0.0, 30.0);
    const auto got = get_max_tokens(m, budget, chunk, blocks, r, acc, 16);
    const auto want = scan_max_tokens(m, budget, chunk, blocks, r, acc, 16);
    CHECK(got.tokens == want.tokens);
    CHECK(got.latency_ms == doctest::Approx(want.latency_ms));
    CHECK(got.latency_ms <= budget);
  }
}

TEST_CASE("get_max_tokens edge cases") {
  const auto m = PredictorModel::from_hardware(ref_hw());
  PrefillCandidate r{100, 0, 0};
  CHECK(get_max_tokens(m, kUnboundedLatency, 512, 100, r, {}, 16).tokens == 100);
  CHECK(get_max_tokens(m, kUnboundedLatency, 40, 100, r, {}, 16).tokens == 40);
  // Three blocks hold 48 tokens.
  CHECK(get_max_tokens(m, kUnboundedLatency, 512, 3, r, {}, 16).tokens == 48);
  CHECK(get_max_tokens(m, 0.0, 512, 100, r, {}, 16) == MaxTokens{});
  // Partially filled last block is usable without new blocks.
  PrefillCandidate part{100, 20, 2};
  CHECK(memory_token_cap(part, 0, 16) == 12);
  CHECK(get_max_tokens(m, kUnboundedLatency, 512, 0, part, {}, 16).tokens == 12);
}

TEST_CASE("noise-free samples are recovered exactly") {
  const auto hw = ref_hw(0.0);
  const auto prof = profile_hardware(hw, ProfileGrid::standard(), 5);
  CHECK_FALSE(prof.degenerate);
  const auto m = fit(prof.samples);
  CHECK(mape(m, prof.samples) < 1e-9);
  CHECK(m.intercept == doctest::Approx(hw.c0).epsilon(1e-6));
  CHECK(m.weight(Feature::kSp) == doctest::Approx(hw.c1).epsilon(1e-6));
  CHECK(m.weight(Feature::kSp2) == doctest::Approx(hw.c3).epsilon(1e-6));
  CHECK(m.weight(Feature::kNp) == doctest::Approx(hw.c4).epsilon(1e-6));
  // S_d and N_d are one column here, so their costs land on S_d together.
  CHECK(m.weight(Feature::kSd) == doctest::Approx(hw.c2 + hw.c5).epsilon(1e-6));
  CHECK(std::abs(m.weight(Feature::kNd)) < 1e-12);
  CHECK(std::abs(m.weight(Feature::kSd2)) < 1e-9);
}

TEST_CASE("one percent noise keeps holdout error small") {
  const auto prof = profile_hardware(ref_hw(0.01), ProfileGrid::standard(), 8);
  const auto [train, hold] = split_samples(prof.samples, 0.2, 9);
  CHECK(hold.size() == prof.samples.size() / 5);
  CHECK(train.size() + hold.size() == prof.samples.size());
  const auto m = fit(train);
  CHECK(mape(m, hold) <= 0.02);
  CHECK(m.weight(Feature::kSp) >= 0.0);
  CHECK(m.weight(Feature::kSd) >= 0.0);
  CHECK(m.weight(Feature::kSp2) >= 0.0);
}

TEST_CASE("negative fitted weights are clamped") {
  // Latency falls with S_p; the S_p weight must come back as zero.
  std::vector<Sample> samples;
  for (Tokens p = 0; p <= 1000; p += 50) {
    for (std::int64_t d = 0; d <= 8; ++d) {
      const auto f = BatchFeatures::from_counts(p, p > 0 ? 1 : 0, d);
      samples.push_back({f, 50.0 - 0.01 * static_cast<double>(p) + 0.3 * d});
    }
  }
  const auto m = fit(samples);
  CHECK(m.weight(Feature::kSp) == 0.0);
  CHECK(m.weight(Feature::kSd) >= 0.0);
}

TEST_CASE("rank-deficient designs name the features") {
  ProfileGrid g;
  for (Tokens p = 0; p <= 1024; p += 64) g.prefill_tokens.push_back(p);
  g.prefill_requests = {1};
  g.decode_requests = {0};
  const auto prof = profile_hardware(ref_hw(), g, 1);
  CHECK(prof.degenerate);
  try {
    fit(prof.samples);
    FAIL("expected a fit error");
  } catch (const FitError& e) {
    CHECK(std::string(e.what()).find("S_d") != std::string::npos);
  }
  CHECK_THROWS_AS(fit(std::vector<Sample>(3)), FitError);
}

TEST_CASE("grid cells") {
  ProfileGrid g;
  g.prefill_tokens = {0, 64};
  g.prefill_requests = {1, 2};
  g.decode_requests = {0, 3};
  g.repeats = 2;
  const auto cells = g.cells();
  // Zero prefill tokens collapses the request count to zero.
  CHECK(cells.size() == 2 * (1 + 2));
  for (const auto& c : cells) CHECK((c.S_p == 0) == (c.N_p == 0));
  g.repeats = 0;
  CHECK_THROWS_AS(g.validate(), ValidationError);
}

TEST_CASE("model and samples serialise") {
  auto m = fit(profile_hardware(ref_hw(0.01), ProfileGrid::standard(), 2).samples);
  m.fit_stats.holdout_mape = 0.004;
  const auto back = PredictorModel::from_json(m.to_json());
  CHECK(back.intercept == m.intercept);
  CHECK(back.weights == m.weights);
  CHECK(back.enabled == m.enabled);
  CHECK(back.fit_stats.holdout_mape == doctest::Approx(0.004));
  CHECK_THROWS_AS(PredictorModel::from_json("{"), ParseError);

  const auto prof = profile_hardware(ref_hw(0.01), ProfileGrid::standard(), 2);
  std::stringstream buf;
  write_samples_csv(buf, prof.samples);
  const auto rows = read_samples_csv(buf);
  REQUIRE(rows.size() == prof.samples.size());
  CHECK(rows[7].features == prof.samples[7].features);
  CHECK(rows[7].latency_ms == doctest::Approx(prof.samples[7].latency_ms));
}
