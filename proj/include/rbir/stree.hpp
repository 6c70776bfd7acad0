#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rbir/emd.hpp"
#include "rbir/error.hpp"
#include "rbir/signature.hpp"

namespace rbir {

struct STreeConfig {
  int node_min = 4;
  int node_max = 8;

  void validate() const {
    if (node_min < 1 || node_max < 2 || node_min > node_max / 2 || node_max > 0xffff)
      fail(Errc::invalid_parameter, "S-tree bounds need 1 <= node_min <= node_max/2");
  }
  friend bool operator==(const STreeConfig&, const STreeConfig&) = default;
};

/// `all` descends into every covering child, best first; `single` follows only the best one.
enum class BeamMode { all, single };

/// Work done by one operation (or summed over many).
struct OpCounters {
  std::uint64_t nodes_visited = 0;
  std::uint64_t emd_evaluations = 0;
  std::uint64_t cover_tests = 0;
  std::uint64_t unions = 0;
  std::uint64_t splits = 0;
  std::uint64_t fallbacks = 0;

  OpCounters& operator+=(const OpCounters& o) {
    nodes_visited += o.nodes_visited;
    emd_evaluations += o.emd_evaluations;
    cover_tests += o.cover_tests;
    unions += o.unions;
    splits += o.splits;
    fallbacks += o.fallbacks;
    return *this;
  }
};

struct Candidate {
  BinarySignature sig;
  std::uint64_t oid = 0;
};

struct SearchResult {
  std::vector<Candidate> candidates;
  OpCounters counters;
};

struct TreeStats {
  int height = 0;
  std::size_t node_count = 0;
  std::size_t leaf_count = 0;
  std::size_t signature_count = 0;
  std::size_t min_entries = 0;  ///< over non-root nodes; 0 when the root is the only node
  std::size_t max_entries = 0;
  OpCounters build;
};

/// Height-balanced signature tree. Internal entries hold the OR of their child's entries;
/// leaf entries hold image signatures and oids. Append-only.
class STree {
 public:
  using NodeId = std::uint32_t;
  static constexpr NodeId no_node = std::numeric_limits<NodeId>::max();

  struct Entry {
    BinarySignature sig;
    WeightVector weights;  ///< cached weight_vector(sig)
    std::uint64_t ref = 0; ///< child NodeId for internal nodes, oid for leaves
  };

  struct Node {
    bool leaf = true;
    std::vector<Entry> entries;
    NodeId parent = no_node;
  };

  STree(int blocks, int bits, STreeConfig config, std::shared_ptr<const GroundDistance> distance)
      : blocks_(blocks), bits_(bits), config_(config), distance_(std::move(distance)) {
    config_.validate();
    if (!distance_ || distance_->size() != static_cast<std::size_t>(blocks))
      fail(Errc::shape_mismatch, "ground distance size must equal the signature block count");
    BinarySignature probe(blocks, bits);  // validates the shape
    nodes_.push_back(Node{});
  }

  int blocks() const noexcept { return blocks_; }
  int bits() const noexcept { return bits_; }
  const STreeConfig& config() const noexcept { return config_; }
  const GroundDistance& distance() const noexcept { return *distance_; }
  std::shared_ptr<const GroundDistance> distance_ptr() const noexcept { return distance_; }
  NodeId root() const noexcept { return root_; }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t size() const noexcept { return oids_.size(); }
  bool contains(std::uint64_t oid) const { return oids_.count(oid) != 0; }
  const OpCounters& build_counters() const noexcept { return build_; }

  OpCounters insert(const BinarySignature& sig, std::uint64_t oid) {
    check_shape(sig);
    if (oids_.count(oid)) fail(Errc::duplicate_oid, "oid " + std::to_string(oid) + " already indexed");
    OpCounters c;
    const WeightVector w = weight_vector(sig);

    NodeId v = root_;
    while (true) {
      ++c.nodes_visited;
      const Node& n = nodes_[v];
      if (n.leaf) break;
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n.entries.size(); ++k) {
        const double d = distance_between(n.entries[k].weights, w, c);
        if (k == 0 || d < best_d) {
          best_d = d;
          best = k;
        }
      }
      v = static_cast<NodeId>(n.entries[best].ref);
    }

    nodes_[v].entries.push_back(Entry{sig, w, oid});
    oids_.insert(oid);
    union_signature(v, c);
    if (nodes_[v].entries.size() > static_cast<std::size_t>(config_.node_max)) split_node(v, c);
    build_ += c;
    return c;
  }

  /// Depth-first traversal pruned by the cover test. Children are visited in ascending EMD
  /// order; when no child of an internal node covers the query, the nearest child is taken.
  SearchResult search(const BinarySignature& query, BeamMode beam = BeamMode::all) const {
    check_shape(query);
    SearchResult out;
    OpCounters& c = out.counters;
    if (oids_.empty()) return out;
    const WeightVector qw = weight_vector(query);

    std::vector<NodeId> stack{root_};
    std::vector<std::pair<double, std::size_t>> ranked;
    while (!stack.empty()) {
      const NodeId v = stack.back();
      stack.pop_back();
      ++c.nodes_visited;
      const Node& n = nodes_[v];
      if (n.leaf) {
        for (const auto& e : n.entries) out.candidates.push_back({e.sig, e.ref});
        continue;
      }
      ranked.clear();
      for (std::size_t k = 0; k < n.entries.size(); ++k) {
        ++c.cover_tests;
        if (cover_test(query, n.entries[k].sig)) ranked.emplace_back(distance_between(n.entries[k].weights, qw, c), k);
      }
      if (ranked.empty()) {
        ++c.fallbacks;
        for (std::size_t k = 0; k < n.entries.size(); ++k)
          ranked.emplace_back(distance_between(n.entries[k].weights, qw, c), k);
        std::stable_sort(ranked.begin(), ranked.end());
        ranked.resize(1);
      }
      std::stable_sort(ranked.begin(), ranked.end());
      if (beam == BeamMode::single) ranked.resize(1);
      for (auto it = ranked.rbegin(); it != ranked.rend(); ++it)
        stack.push_back(static_cast<NodeId>(n.entries[it->second].ref));
    }
    return out;
  }

  TreeStats stats() const {
    TreeStats s;
    s.node_count = nodes_.size();
    s.signature_count = oids_.size();
    s.build = build_;
    s.min_entries = std::numeric_limits<std::size_t>::max();
    for (NodeId v = root_; !nodes_[v].leaf; v = static_cast<NodeId>(nodes_[v].entries.front().ref)) ++s.height;
    for (NodeId id = 0; id < nodes_.size(); ++id) {
      const auto& n = nodes_[id];
      if (n.leaf) ++s.leaf_count;
      s.max_entries = std::max(s.max_entries, n.entries.size());
      if (id != root_) s.min_entries = std::min(s.min_entries, n.entries.size());
    }
    if (s.min_entries == std::numeric_limits<std::size_t>::max()) s.min_entries = 0;
    return s;
  }

  /// Returns a description of the first structural violation, or nothing when the tree is sound.
  std::optional<std::string> check_invariants() const {
    if (root_ >= nodes_.size()) return "root id out of range";
    if (nodes_[root_].parent != no_node) return "root has a parent";
    std::vector<int> seen(nodes_.size(), 0);
    std::unordered_set<std::uint64_t> oids;
    int leaf_depth = -1;
    struct Item { NodeId id; int depth; };
    std::vector<Item> stack{{root_, 0}};
    while (!stack.empty()) {
      const auto [id, depth] = stack.back();
      stack.pop_back();
      if (id >= nodes_.size()) return "child id out of range";
      if (seen[id]++) return "node " + std::to_string(id) + " reachable twice";
      const Node& n = nodes_[id];
      const std::size_t cnt = n.entries.size();
      if (cnt > static_cast<std::size_t>(config_.node_max)) return "node " + std::to_string(id) + " overfull";
      if (id != root_ && cnt < static_cast<std::size_t>(config_.node_min))
        return "node " + std::to_string(id) + " underfull";
      if (id == root_ && !n.leaf && cnt < 2) return "internal root with fewer than two entries";
      for (const auto& e : n.entries) {
        if (e.sig.blocks() != blocks_ || e.sig.bits() != bits_) return "entry signature shape mismatch";
        if (e.weights != weight_vector(e.sig)) return "stale cached weights";
        if (n.leaf) {
          if (!oids.insert(e.ref).second) return "duplicate oid " + std::to_string(e.ref);
          continue;
        }
        if (e.ref >= nodes_.size()) return "child id out of range";
        const Node& child = nodes_[e.ref];
        if (child.parent != id) return "parent link mismatch at node " + std::to_string(e.ref);
        if (child.entries.empty()) return "empty child node";
        BinarySignature u(blocks_, bits_);
        for (const auto& ce : child.entries) u |= ce.sig;
        if (!(u == e.sig)) return "union invariant broken above node " + std::to_string(e.ref);
        stack.push_back({static_cast<NodeId>(e.ref), depth + 1});
      }
      if (n.leaf) {
        if (leaf_depth < 0) leaf_depth = depth;
        else if (leaf_depth != depth) return "leaves at unequal depth";
      }
    }
    for (std::size_t id = 0; id < nodes_.size(); ++id)
      if (!seen[id]) return "unreachable node " + std::to_string(id);
    if (oids != oids_) return "oid registry out of sync";
    return std::nullopt;
  }

  /// Rebuilds a tree from explicit nodes (used by the loader); the result is validated.
  static STree assemble(int blocks, int bits, STreeConfig config, std::shared_ptr<const GroundDistance> distance,
                        std::vector<Node> nodes, NodeId root) {
    STree t(blocks, bits, config, std::move(distance));
    if (nodes.empty()) fail(Errc::invalid_input, "tree has no nodes");
    t.nodes_ = std::move(nodes);
    t.root_ = root;
    if (root >= t.nodes_.size()) fail(Errc::invalid_input, "root id out of range");
    for (auto& n : t.nodes_)
      for (auto& e : n.entries) {
        if (e.sig.blocks() != blocks || e.sig.bits() != bits) fail(Errc::shape_mismatch, "entry shape mismatch");
        e.weights = weight_vector(e.sig);
        if (n.leaf && !t.oids_.insert(e.ref).second) fail(Errc::invalid_input, "duplicate oid in tree");
      }
    if (auto err = t.check_invariants()) fail(Errc::invalid_input, "invalid tree: " + *err);
    return t;
  }

  friend bool operator==(const STree& a, const STree& b) { return a.same_structure(b); }

 private:
  double distance_between(const WeightVector& a, const WeightVector& b, OpCounters& c) const {
    ++c.emd_evaluations;
    return emd(a, b, *distance_);
  }

  void check_shape(const BinarySignature& s) const {
    if (s.blocks() != blocks_ || s.bits() != bits_) fail(Errc::shape_mismatch, "signature shape does not match tree");
  }

  BinarySignature union_of(const Node& n) const {
    BinarySignature u(blocks_, bits_);
    for (const auto& e : n.entries) u |= e.sig;
    return u;
  }

  Entry& parent_entry(NodeId child) {
    Node& p = nodes_[nodes_[child].parent];
    for (auto& e : p.entries)
      if (e.ref == child) return e;
    fail(Errc::invalid_input, "parent does not reference child");
  }

  /// Refreshes the parent's entry for `v` with the OR of v's entries, up to the root.
  void union_signature(NodeId v, OpCounters& c) {
    while (nodes_[v].parent != no_node) {
      ++c.unions;
      BinarySignature u = union_of(nodes_[v]);
      Entry& e = parent_entry(v);
      if (u == e.sig) return;  // ancestors already cover it
      e.weights = weight_vector(u);
      e.sig = std::move(u);
      v = nodes_[v].parent;
    }
  }

  static double margin(double to_other, double to_own) {
    if (std::isinf(to_other) && std::isinf(to_own)) return 0.0;
    return to_other - to_own;
  }

  /// Seeds are the pair with the largest pairwise EMD (first in scan order on ties). Each other
  /// entry joins the seed it is nearer to; ties stay with the alpha seed. Underfull groups then
  /// take the entries that are cheapest to move.
  void split_node(NodeId v, OpCounters& c) {
    ++c.splits;
    std::vector<Entry> all = std::move(nodes_[v].entries);
    const std::size_t n = all.size();
    if (n < 2) fail(Errc::invalid_input, "split of a node with fewer than two entries");
    std::vector<double> d(n * n, 0.0);
    std::size_t sa = 0, sb = 1;
    double widest = -1.0;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) {
        d[a * n + b] = d[b * n + a] = distance_between(all[a].weights, all[b].weights, c);
        if (d[a * n + b] > widest) {
          widest = d[a * n + b];
          sa = a;
          sb = b;
        }
      }

    std::vector<char> in_beta(n, 0);
    for (std::size_t k = 0; k < n; ++k)
      in_beta[k] = k == sb || (k != sa && d[k * n + sb] < d[k * n + sa]) ? 1 : 0;

    auto count_beta = [&] { return static_cast<std::size_t>(std::count(in_beta.begin(), in_beta.end(), 1)); };
    const auto need = static_cast<std::size_t>(config_.node_min);
    while (count_beta() < need || n - count_beta() < need) {
      const bool grow_beta = count_beta() < need;
      const std::size_t own_seed = grow_beta ? sa : sb;
      const std::size_t other_seed = grow_beta ? sb : sa;
      std::size_t pick = n;
      double pick_margin = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k) {
        if (k == own_seed || static_cast<bool>(in_beta[k]) == grow_beta) continue;
        const double m = margin(d[k * n + other_seed], d[k * n + own_seed]);
        if (pick == n || m < pick_margin) {
          pick = k;
          pick_margin = m;
        }
      }
      in_beta[pick] = grow_beta ? 1 : 0;
    }

    Node alpha{nodes_[v].leaf, {}, nodes_[v].parent};
    Node beta{nodes_[v].leaf, {}, nodes_[v].parent};
    for (std::size_t k = 0; k < n; ++k) (in_beta[k] ? beta : alpha).entries.push_back(std::move(all[k]));

    const auto beta_id = static_cast<NodeId>(nodes_.size());
    if (!alpha.leaf)
      for (const auto& e : beta.entries) nodes_[e.ref].parent = beta_id;
    BinarySignature ua = union_of(alpha);
    BinarySignature ub = union_of(beta);
    nodes_[v] = std::move(alpha);
    nodes_.push_back(std::move(beta));

    const NodeId parent = nodes_[v].parent;
    if (parent == no_node) {
      const auto root_id = static_cast<NodeId>(nodes_.size());
      Node root{false, {}, no_node};
      root.entries.push_back(Entry{ua, weight_vector(ua), v});
      root.entries.push_back(Entry{ub, weight_vector(ub), beta_id});
      nodes_.push_back(std::move(root));
      nodes_[v].parent = root_id;
      nodes_[beta_id].parent = root_id;
      root_ = root_id;
      return;
    }

    auto& pe = nodes_[parent].entries;
    auto it = std::find_if(pe.begin(), pe.end(), [v](const Entry& e) { return e.ref == v; });
    it->weights = weight_vector(ua);
    it->sig = std::move(ua);
    pe.insert(std::next(it), Entry{ub, weight_vector(ub), beta_id});
    if (pe.size() > static_cast<std::size_t>(config_.node_max)) split_node(parent, c);
  }

  bool same_structure(const STree& o) const {
    if (blocks_ != o.blocks_ || bits_ != o.bits_ || !(config_ == o.config_)) return false;
    std::vector<std::pair<NodeId, NodeId>> stack{{root_, o.root_}};
    while (!stack.empty()) {
      const auto [a, b] = stack.back();
      stack.pop_back();
      const Node& x = nodes_[a];
      const Node& y = o.nodes_[b];
      if (x.leaf != y.leaf || x.entries.size() != y.entries.size()) return false;
      for (std::size_t k = 0; k < x.entries.size(); ++k) {
        if (!(x.entries[k].sig == y.entries[k].sig)) return false;
        if (x.leaf) {
          if (x.entries[k].ref != y.entries[k].ref) return false;
        } else {
          stack.emplace_back(static_cast<NodeId>(x.entries[k].ref), static_cast<NodeId>(y.entries[k].ref));
        }
      }
    }
    return true;
  }

  int blocks_;
  int bits_;
  STreeConfig config_;
  std::shared_ptr<const GroundDistance> distance_;
  std::vector<Node> nodes_;
  NodeId root_ = 0;
  std::unordered_set<std::uint64_t> oids_;
  OpCounters build_;
};

/// Upper bound on height for n stored signatures: ceil(log_{node_min} n) + 1.
inline int height_bound(std::size_t n, int node_min) {
  if (n <= 1) return 1;
  if (node_min <= 1) return static_cast<int>(n);
  int h = 0;
  std::size_t cap = 1;
  while (cap < n) {
    cap *= static_cast<std::size_t>(node_min);
    ++h;
  }
  return h + 1;
}

}  // namespace rbir
