#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hygen/batch_features.h"
#include "hygen/sim/engine.h"
#include "hygen/sim/hardware_model.h"

namespace hygen::predictor {

struct FitStats {
  std::size_t samples = 0;
  double train_mape = 0.0;
  // Filled in by callers that evaluate a held-out split.
  double holdout_mape = -1.0;
};

// Linear batch-latency model over BatchFeatures plus an intercept.
struct PredictorModel {
  double intercept = 0.0;
  std::array<double, kNumFeatures> weights{};
  std::array<bool, kNumFeatures> enabled{true, true, true, true, true, true};
  FitStats fit_stats;

  double weight(Feature f) const { return weights[static_cast<std::size_t>(f)]; }
  bool is_enabled(Feature f) const { return enabled[static_cast<std::size_t>(f)]; }

  // Model whose weights are copied from a hardware model's coefficients.
  // Only representable terms are carried over.
  static PredictorModel from_hardware(const sim::HardwareModel& hw);

  std::string to_json() const;
  static PredictorModel from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static PredictorModel load(const std::filesystem::path& path);
};

// Weighted sum of the enabled features plus intercept, floored at 0.
double predict(const PredictorModel& model, const BatchFeatures& f);

// Features of a plan. Prefill entries count the tokens as planned (after
// prefix credit), decode entries one token each.
BatchFeatures featurize(const sim::BatchPlan& plan);

// Latency added by one more decode request on top of `acc`; never negative.
double predict_decode_marginal(const PredictorModel& model, const BatchFeatures& acc);

// Latency added by `l` prefill tokens of a request not yet in the batch.
double predict_prefill_marginal(const PredictorModel& model,
                                const BatchFeatures& acc, Tokens l);

// What get_max_tokens needs to know about the candidate request.
struct PrefillCandidate {
  Tokens remaining_prefill = 0;
  Tokens context_tokens = 0;  // tokens already in KV, including prefix credit
  Blocks blocks_held = 0;
};

struct MaxTokens {
  Tokens tokens = 0;
  double latency_ms = 0.0;  // marginal latency at `tokens`

  bool operator==(const MaxTokens&) const = default;
};

inline constexpr double kUnboundedLatency = std::numeric_limits<double>::infinity();

// Largest l <= min(chunk, remaining prefill, memory capacity) whose prefill
// marginal fits in `latency_budget`. Integer binary search; relies on the
// marginal being nondecreasing in l, which the fit's clamping guarantees.
// Returns {0, 0} when not even one token fits.
MaxTokens get_max_tokens(const PredictorModel& model, double latency_budget,
                         Tokens chunk, Blocks blocks, const PrefillCandidate& r,
                         const BatchFeatures& acc, Tokens block_size);

// Token cap implied by memory: context may grow to (held + blocks) * size.
Tokens memory_token_cap(const PrefillCandidate& r, Blocks blocks, Tokens block_size);

// ---------------------------------------------------------------------------
// Profiling and fitting

struct Sample {
  BatchFeatures features;
  double latency_ms = 0.0;
};

// Cartesian grid of batch compositions. Cells with zero prefill tokens get
// N_p = 0; cells with prefill tokens and zero prefill requests are skipped.
struct ProfileGrid {
  std::vector<Tokens> prefill_tokens;
  std::vector<std::int64_t> prefill_requests;
  std::vector<std::int64_t> decode_requests;
  int repeats = 1;

  void validate() const;
  std::vector<BatchFeatures> cells() const;

  // 0..4096 step 128 prefill tokens, 1..4 prefill requests, 0..64 decodes.
  static ProfileGrid standard();
};

struct ProfileResult {
  std::vector<Sample> samples;
  // Some varied dimension has fewer than two distinct values.
  bool degenerate = false;
};

ProfileResult profile_hardware(const sim::HardwareModel& hw, const ProfileGrid& grid,
                               std::uint64_t seed);

struct FitOptions {
  // S_d^2 can be switched off; the other features are always fitted.
  bool enable_sd2 = true;
};

// Least squares on the enabled features, then clamps negative S_p, S_p2 and
// S_d weights to zero and refits the rest with those held fixed. Throws
// FitError naming the collinear features when the design is rank deficient.
PredictorModel fit(std::span<const Sample> samples, const FitOptions& options = {});

double mape(const PredictorModel& model, std::span<const Sample> samples);

// Deterministic shuffle then split; `holdout_fraction` of samples go second.
std::pair<std::vector<Sample>, std::vector<Sample>> split_samples(
    std::span<const Sample> samples, double holdout_fraction, std::uint64_t seed);

void write_samples_csv(std::ostream& out, std::span<const Sample> samples);
void write_samples_csv(const std::filesystem::path& path, std::span<const Sample> samples);
std::vector<Sample> read_samples_csv(std::istream& in);

}  // namespace hygen::predictor
