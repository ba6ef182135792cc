#include "hygen/psm/psm.h"

#include "hygen/errors.h"

namespace hygen::psm {

void PsmConfig::validate() const {
  if (!(utility_ratio >= 0.0 && utility_ratio <= 1.0)) {
    throw ValidationError("utility_ratio must be in [0, 1]");
  }
}

PsmQueue::PsmQueue(PsmConfig config) : config_(config), rng_(config.seed) {
  config_.validate();
}

void PsmQueue::insert(const Request& r) {
  if (r.cls != RequestClass::kOffline) {
    throw ContractViolation("only offline requests enter the PSM queue");
  }
  tree_.insert(r);
  index_.insert(r.id, r.arrival_ms);
}

void PsmQueue::remove(RequestId id) {
  tree_.remove(id);
  index_.remove(id);
}

std::optional<RequestId> PsmQueue::next_fair() {
  if (empty()) return std::nullopt;
  const double x = rng_.uniform();
  return x < config_.utility_ratio ? tree_.next() : index_.oldest();
}

}  // namespace hygen::psm
