#pragma once

#include <cstdint>
#include <optional>

#include "hygen/psm/prefix_tree.h"
#include "hygen/rng.h"
#include "hygen/types.h"

namespace hygen::psm {

struct PsmConfig {
  // Probability of taking the next request in DFS order rather than the
  // stalest one. 1 is pure prefix sharing, 0 is arrival order.
  double utility_ratio = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Waiting offline requests, indexed both by prompt prefix and by age. The
// two structures always hold the same requests.
class PsmQueue {
 public:
  explicit PsmQueue(PsmConfig config = {});

  void insert(const Request& r);
  void remove(RequestId id);

  std::optional<RequestId> next_dfs() const { return tree_.next(); }
  std::optional<RequestId> next_oldest() const { return index_.oldest(); }
  // One uniform draw per call on a nonempty queue: below u picks DFS order,
  // otherwise the stalest request.
  std::optional<RequestId> next_fair();

  bool contains(RequestId id) const { return tree_.contains(id); }
  bool empty() const { return tree_.empty(); }
  std::size_t size() const { return tree_.size(); }

  const PrefixTree& tree() const { return tree_; }
  const FreshnessIndex& index() const { return index_; }
  const PsmConfig& config() const { return config_; }
  const Rng& rng() const { return rng_; }

 private:
  PsmConfig config_;
  PrefixTree tree_;
  FreshnessIndex index_;
  Rng rng_;
};

}  // namespace hygen::psm
