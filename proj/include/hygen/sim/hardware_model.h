#pragma once

#include <cstdint>

#include "hygen/batch_features.h"
#include "hygen/rng.h"

namespace hygen::sim {

// Ground-truth cost of one engine iteration. Shares the predictor's feature
// family, plus an optional decode-quadratic and prefill x decode cross term
// that the default predictor cannot represent.
struct HardwareModel {
  double c0 = 0.0;       // ms, intercept
  double c1 = 0.0;       // ms per prefill token
  double c2 = 0.0;       // ms per decode token
  double c3 = 0.0;       // ms per prefill token^2
  double c3b = 0.0;      // ms per decode token^2
  double c4 = 0.0;       // ms per prefill request
  double c5 = 0.0;       // ms per decode request
  double c_cross = 0.0;  // ms per (prefill token * decode token)
  double noise_pct = 0.0;       // std of multiplicative noise, as a fraction
  double parallel_scale = 1.0;  // divides everything except c0
  std::uint64_t seed = 0;

  // Throws ValidationError on negative coefficients or bad scale.
  void validate() const;

  // Noise-free latency.
  double expected_latency(const BatchFeatures& f) const;
};

// Expected latency times (1 + eps), eps ~ Normal(0, noise_pct). Consumes one
// normal draw from `rng` only when noise_pct > 0.
double true_batch_latency(const HardwareModel& hw, const BatchFeatures& f,
                          Rng& rng);

}  // namespace hygen::sim
