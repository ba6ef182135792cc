#include "hygen/sim/prefix_cache.h"

#include "hygen/errors.h"

namespace hygen::sim {

Tokens PrefixCache::longest_prefix_tokens(std::span<const Segment> path) const {
  Key key;
  key.reserve(path.size());
  Tokens credit = 0;
  for (const auto& seg : path) {
    key.push_back(seg.id);
    auto it = entries_.find(key);
    if (it == entries_.end()) break;
    credit = it->second.tokens;
  }
  return credit;
}

bool PrefixCache::contains(std::span<const Segment> path) const {
  Key key;
  for (const auto& seg : path) key.push_back(seg.id);
  return entries_.count(key) > 0;
}

void PrefixCache::set_entry(const Key& key, std::optional<Entry> value) {
  auto it = entries_.find(key);
  if (recording_) {
    undo_.emplace_back(key, it == entries_.end() ? std::nullopt
                                                 : std::optional<Entry>(it->second));
  }
  if (it != entries_.end()) {
    lru_.erase(evict_key(key, it->second));
    if (value) {
      it->second = *value;
    } else {
      entries_.erase(it);
    }
  } else if (value) {
    entries_.emplace(key, *value);
  }
  if (value) lru_.insert(evict_key(key, *value));
}

Tokens PrefixCache::admit(std::span<const Segment> path) {
  const Tokens credit = longest_prefix_tokens(path);
  if (max_entries_ == 0) return credit;

  const std::uint64_t stamp = ++clock_;
  Key key;
  key.reserve(path.size());
  Tokens cumulative = 0;
  for (const auto& seg : path) {
    key.push_back(seg.id);
    cumulative += seg.tokens;
    set_entry(key, Entry{stamp, key.size(), cumulative});
  }
  while (entries_.size() > max_entries_) {
    const Key victim = std::get<2>(*lru_.begin());
    set_entry(victim, std::nullopt);
  }
  return credit;
}

void PrefixCache::checkpoint() {
  if (recording_) throw ContractViolation("PrefixCache checkpoints do not nest");
  recording_ = true;
  saved_clock_ = clock_;
  undo_.clear();
}

void PrefixCache::rollback() {
  if (!recording_) throw ContractViolation("PrefixCache rollback without checkpoint");
  recording_ = false;
  for (auto it = undo_.rbegin(); it != undo_.rend(); ++it) {
    set_entry(it->first, it->second);
  }
  undo_.clear();
  clock_ = saved_clock_;
}

}  // namespace hygen::sim
