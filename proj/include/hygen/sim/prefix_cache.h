#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <tuple>
#include <vector>

#include "hygen/types.h"

namespace hygen::sim {

// Set of cached prompt-path prefixes with LRU eviction.
//
// Every admitted path inserts all of its prefixes and stamps them with the
// same use counter, so a parent's stamp is never older than a child's. The
// eviction order (oldest stamp, deeper first on ties) therefore only removes
// leaves and the cached set stays prefix-closed.
//
// A checkpoint/rollback pair lets the scheduler dry-run admissions in plan
// order and then restore the exact prior state.
class PrefixCache {
 public:
  static constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

  explicit PrefixCache(std::size_t max_entries = kUnlimited)
      : max_entries_(max_entries) {}

  // Tokens covered by the longest cached prefix of `path`.
  Tokens longest_prefix_tokens(std::span<const Segment> path) const;

  // Returns the credit for `path`, then inserts/touches all of its prefixes
  // and evicts down to the entry limit.
  Tokens admit(std::span<const Segment> path);

  std::size_t size() const { return entries_.size(); }
  std::size_t max_entries() const { return max_entries_; }
  bool contains(std::span<const Segment> path) const;

  // Starts recording undo information. Checkpoints do not nest.
  void checkpoint();
  // Restores the state captured at checkpoint() and stops recording.
  void rollback();
  bool in_checkpoint() const { return recording_; }

 private:
  using Key = std::vector<SegmentId>;
  struct Entry {
    std::uint64_t last_use = 0;
    std::size_t depth = 0;
    Tokens tokens = 0;  // cumulative tokens up to and including this prefix
  };
  using EvictKey = std::tuple<std::uint64_t, std::int64_t, Key>;

  void set_entry(const Key& key, std::optional<Entry> value);
  static EvictKey evict_key(const Key& key, const Entry& e) {
    return {e.last_use, -static_cast<std::int64_t>(e.depth), key};
  }

  std::size_t max_entries_;
  std::uint64_t clock_ = 0;
  std::map<Key, Entry> entries_;
  std::set<EvictKey> lru_;

  bool recording_ = false;
  std::uint64_t saved_clock_ = 0;
  std::vector<std::pair<Key, std::optional<Entry>>> undo_;
};

}  // namespace hygen::sim
