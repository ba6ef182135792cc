#include "hygen/psm/prefix_tree.h"

#include "hygen/errors.h"

namespace hygen::psm {

PrefixTree::PrefixTree() : root_(std::make_unique<Node>()) {}
PrefixTree::~PrefixTree() = default;
PrefixTree::PrefixTree(PrefixTree&&) noexcept = default;
PrefixTree& PrefixTree::operator=(PrefixTree&&) noexcept = default;

void PrefixTree::insert(const Request& r) {
  if (leaves_.count(r.id)) {
    throw ContractViolation("request " + std::to_string(r.id) + " already in prefix tree");
  }

  // Walk the existing part of the path.
  Node* node = root_.get();
  std::size_t depth = 0;
  while (depth < r.prompt_path.size()) {
    auto it = node->by_segment.find(r.prompt_path[depth].id);
    if (it == node->by_segment.end()) break;
    node = it->second->node.get();
    ++depth;
  }
  Node* const anchor = node;
  const bool anchor_had_leaves = anchor->leaf_count > 0;
  const DfsList::iterator anchor_last = anchor->last_leaf;

  // New edges go after everything already below the anchor.
  for (; depth < r.prompt_path.size(); ++depth) {
    auto child = std::make_unique<Node>();
    child->segment = r.prompt_path[depth].id;
    child->tokens = r.prompt_path[depth].tokens;
    child->parent = node;
    Node* raw = child.get();
    node->children.push_back(Child{std::move(child), 0});
    raw->in_parent = std::prev(node->children.end());
    node->by_segment.emplace(raw->segment, raw->in_parent);
    ++node_count_;
    node = raw;
  }
  Node* const terminal = node;
  terminal->children.push_back(Child{nullptr, r.id});

  const auto pos = anchor_had_leaves ? std::next(anchor_last) : dfs_.end();
  const auto dfs_it = dfs_.insert(pos, r.id);
  leaves_.emplace(r.id, LeafRef{terminal, std::prev(terminal->children.end()), dfs_it});

  for (Node* x = terminal; x != nullptr; x = x->parent) {
    const bool was_empty = x->leaf_count == 0;
    ++x->leaf_count;
    if (was_empty || (anchor_had_leaves && x->last_leaf == anchor_last)) {
      x->last_leaf = dfs_it;
    }
  }
}

void PrefixTree::remove(RequestId id) {
  auto found = leaves_.find(id);
  if (found == leaves_.end()) {
    throw ContractViolation("request " + std::to_string(id) + " not in prefix tree");
  }
  const LeafRef ref = found->second;
  leaves_.erase(found);

  const auto it = ref.in_dfs;
  const auto prev = it == dfs_.begin() ? dfs_.end() : std::prev(it);
  for (Node* x = ref.node; x != nullptr; x = x->parent) {
    --x->leaf_count;
    // Subtree leaves are contiguous, so the predecessor is still inside.
    if (x->last_leaf == it) x->last_leaf = prev;
  }
  dfs_.erase(it);
  ref.node->children.erase(ref.in_node);

  Node* x = ref.node;
  while (x != root_.get() && x->leaf_count == 0) {
    Node* parent = x->parent;
    parent->by_segment.erase(x->segment);
    parent->children.erase(x->in_parent);  // destroys x
    --node_count_;
    x = parent;
  }
}

std::optional<RequestId> PrefixTree::next() const {
  if (dfs_.empty()) return std::nullopt;
  return dfs_.front();
}

std::vector<RequestId> PrefixTree::dfs_order() const {
  return {dfs_.begin(), dfs_.end()};
}

void PrefixTree::dump_node(const Node& n, int depth, std::string& out,
                           const std::unordered_map<RequestId, std::size_t>& index) const {
  for (const auto& c : n.children) {
    out.append(static_cast<std::size_t>(depth) * 2, ' ');
    if (c.node) {
      out += "seg " + std::to_string(c.node->segment) + " (" +
             std::to_string(c.node->tokens) + " tok, " +
             std::to_string(c.node->leaf_count) + " req)\n";
      dump_node(*c.node, depth + 1, out, index);
    } else {
      out += "[" + std::to_string(index.at(c.leaf)) + "] request " +
             std::to_string(c.leaf) + "\n";
    }
  }
}

std::string PrefixTree::dump() const {
  std::unordered_map<RequestId, std::size_t> index;
  std::size_t i = 0;
  for (auto id : dfs_) index[id] = i++;
  std::string out = "root (" + std::to_string(root_->leaf_count) + " req)\n";
  dump_node(*root_, 1, out, index);
  return out;
}

void FreshnessIndex::insert(RequestId id, double arrival_ms) {
  if (!arrival_.emplace(id, arrival_ms).second) {
    throw ContractViolation("request " + std::to_string(id) + " already in freshness index");
  }
  keys_.emplace(arrival_ms, id);
}

void FreshnessIndex::remove(RequestId id) {
  auto it = arrival_.find(id);
  if (it == arrival_.end()) {
    throw ContractViolation("request " + std::to_string(id) + " not in freshness index");
  }
  keys_.erase({it->second, id});
  arrival_.erase(it);
}

std::optional<RequestId> FreshnessIndex::oldest() const {
  if (keys_.empty()) return std::nullopt;
  return keys_.begin()->second;
}

std::vector<RequestId> FreshnessIndex::ordered() const {
  std::vector<RequestId> out;
  out.reserve(keys_.size());
  for (const auto& k : keys_) out.push_back(k.second);
  return out;
}

}  // namespace hygen::psm
