#pragma once

#include <cstddef>
#include <list>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hygen/types.h"

namespace hygen::psm {

// Trie over prompt segment ids whose leaves are waiting offline requests.
//
// Children of a node (sub-nodes and request leaves alike) are ordered by
// when the edge was created. The live DFS order is kept as a linked list;
// every node remembers the last leaf of its subtree, so insertion and
// removal touch only the nodes on the request's path and the next request
// in DFS order is the list head.
class PrefixTree {
 public:
  PrefixTree();
  ~PrefixTree();
  PrefixTree(PrefixTree&&) noexcept;
  PrefixTree& operator=(PrefixTree&&) noexcept;
  PrefixTree(const PrefixTree&) = delete;
  PrefixTree& operator=(const PrefixTree&) = delete;

  // Throws ContractViolation if the request is already present.
  void insert(const Request& r);
  // Throws ContractViolation if the request is absent.
  void remove(RequestId id);

  std::optional<RequestId> next() const;
  bool contains(RequestId id) const { return leaves_.count(id) > 0; }
  std::size_t size() const { return leaves_.size(); }
  bool empty() const { return leaves_.empty(); }
  // Internal nodes, excluding the root.
  std::size_t node_count() const { return node_count_; }

  std::vector<RequestId> dfs_order() const;

  // Indented listing; leaves carry their DFS index.
  std::string dump() const;

 private:
  struct Node;
  struct Child {
    std::unique_ptr<Node> node;  // null for a request leaf
    RequestId leaf = 0;
  };
  using ChildList = std::list<Child>;
  using DfsList = std::list<RequestId>;

  struct Node {
    SegmentId segment = 0;
    Tokens tokens = 0;
    Node* parent = nullptr;
    ChildList children;
    std::unordered_map<SegmentId, ChildList::iterator> by_segment;
    ChildList::iterator in_parent;
    std::size_t leaf_count = 0;
    DfsList::iterator last_leaf;
  };

  struct LeafRef {
    Node* node = nullptr;
    ChildList::iterator in_node;
    DfsList::iterator in_dfs;
  };

  void dump_node(const Node& n, int depth, std::string& out,
                 const std::unordered_map<RequestId, std::size_t>& index) const;

  std::unique_ptr<Node> root_;
  DfsList dfs_;
  std::unordered_map<RequestId, LeafRef> leaves_;
  std::size_t node_count_ = 0;
};

// Waiting offline requests ordered by (arrival_ms, id); oldest() is O(1).
class FreshnessIndex {
 public:
  void insert(RequestId id, double arrival_ms);
  void remove(RequestId id);
  std::optional<RequestId> oldest() const;
  bool contains(RequestId id) const { return arrival_.count(id) > 0; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }
  std::vector<RequestId> ordered() const;

 private:
  std::set<std::pair<double, RequestId>> keys_;
  std::unordered_map<RequestId, double> arrival_;
};

}  // namespace hygen::psm
