#include "hygen/sim/hardware_model.h"

#include <algorithm>

#include "hygen/errors.h"

namespace hygen::sim {

void HardwareModel::validate() const {
  for (double c : {c0, c1, c2, c3, c3b, c4, c5, c_cross}) {
    if (c < 0.0) throw ValidationError("hardware coefficients must be >= 0");
  }
  if (noise_pct < 0.0) throw ValidationError("noise_pct must be >= 0");
  if (parallel_scale <= 0.0) throw ValidationError("parallel_scale must be > 0");
}

double HardwareModel::expected_latency(const BatchFeatures& f) const {
  const double sp = static_cast<double>(f.S_p);
  const double sd = static_cast<double>(f.S_d);
  const double compute = c1 * sp + c2 * sd + c3 * static_cast<double>(f.S_p2) +
                         c3b * static_cast<double>(f.S_d2) +
                         c4 * static_cast<double>(f.N_p) +
                         c5 * static_cast<double>(f.N_d) + c_cross * sp * sd;
  return c0 + compute / parallel_scale;
}

double true_batch_latency(const HardwareModel& hw, const BatchFeatures& f,
                          Rng& rng) {
  const double base = hw.expected_latency(f);
  if (hw.noise_pct <= 0.0) return base;
  // Large negative draws would flip the sign; clamp at zero latency.
  return std::max(0.0, base * (1.0 + hw.noise_pct * rng.normal()));
}

}  // namespace hygen::sim
