#pragma once

// Heterarchical graph of layers. Edges point from a lower node to a higher
// node. A node with several children combines their summaries through an
// input merge pooler; a node with several parents combines their predictions
// through a context merge pooler.
//
// tick() is a lockstep schedule over per-node slots:
//   upward pass   (topological order)  feed bottom inputs / ready merged inputs
//   downward pass (reverse topological) push parent predictions into children
// A child therefore conditions on the context produced during the previous tick.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "hica/errors.hpp"
#include "hica/layer.hpp"
#include "hica/signal.hpp"
#include "hica/unit.hpp"

namespace hica {

using NodeId = std::size_t;

struct NodeReport {
  bool fed = false;
  SignalVector input;
  SignalVector pre_prediction;
  double ar_loss = 0.0;
  bool emitted = false;
  SignalVector summary;
  std::optional<SignalVector> window;
  std::optional<SignalVector> reconstruction;
  double pool_loss = 0.0;
  double effective_lr = 0.0;
  // Tick at which the context in force during this feed was delivered; unset
  // while the node still runs on its initial zero context.
  std::optional<std::uint64_t> context_stamp;

  friend bool operator==(const NodeReport&, const NodeReport&) = default;
};

struct TickReport {
  std::uint64_t tick = 0;
  double gain = 1.0;
  std::vector<NodeReport> nodes;

  friend bool operator==(const TickReport&, const TickReport&) = default;
};

class HetGraph {
 public:
  explicit HetGraph(std::uint64_t seed = 0) : rng_(seed) {}

  NodeId add_node(Layer layer, const std::string& label) {
    if (label.empty()) throw GraphError("node label must not be empty");
    if (by_label_.count(label)) throw GraphError("duplicate node label '" + label + "'");
    const NodeId id = nodes_.size();
    Node n;
    n.label = label;
    n.layer = std::move(layer);
    nodes_.push_back(std::move(n));
    by_label_[label] = id;
    validated_ = false;
    return id;
  }

  void add_edge(NodeId lower, NodeId higher) {
    check_id(lower);
    check_id(higher);
    if (lower == higher) throw GraphError("self-edge on node '" + nodes_[lower].label + "'");
    auto& parents = nodes_[lower].parents;
    if (std::find(parents.begin(), parents.end(), higher) != parents.end())
      throw GraphError("duplicate edge " + nodes_[lower].label + " -> " + nodes_[higher].label);
    parents.push_back(higher);
    nodes_[higher].children.push_back(lower);
    validated_ = false;
  }

  std::size_t size() const { return nodes_.size(); }
  bool validated() const { return validated_; }

  NodeId id(const std::string& label) const {
    auto it = by_label_.find(label);
    if (it == by_label_.end()) throw GraphError("unknown node '" + label + "'");
    return it->second;
  }
  const std::string& label(NodeId n) const { return node(n).label; }

  Layer& layer(NodeId n) { return node(n).layer; }
  const Layer& layer(NodeId n) const { return node(n).layer; }

  const std::vector<NodeId>& children(NodeId n) const { return node(n).children; }
  const std::vector<NodeId>& parents(NodeId n) const { return node(n).parents; }

  const std::optional<Pooler>& input_merge(NodeId n) const { return node(n).input_merge; }
  const std::optional<Pooler>& context_merge(NodeId n) const { return node(n).context_merge; }

  std::vector<NodeId> bottoms() const {
    std::vector<NodeId> out;
    for (NodeId i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].children.empty()) out.push_back(i);
    return out;
  }
  std::vector<NodeId> roots() const {
    std::vector<NodeId> out;
    for (NodeId i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].parents.empty()) out.push_back(i);
    return out;
  }

  const std::vector<NodeId>& order() const {
    require_validated();
    return order_;
  }

  // Every problem found, one message each; empty when the graph is usable.
  std::vector<std::string> check() const {
    std::vector<std::string> errors;
    if (nodes_.empty()) {
      errors.push_back("graph has no nodes");
      return errors;
    }
    std::vector<NodeId> topo;
    std::vector<NodeId> stuck;
    kahn(topo, stuck);
    if (!stuck.empty()) {
      std::string names;
      for (NodeId n : stuck) names += (names.empty() ? "" : ", ") + nodes_[n].label;
      errors.push_back("cycle through nodes: " + names);
    }
    if (nodes_.size() > 1)
      for (const auto& n : nodes_)
        if (n.children.empty() && n.parents.empty()) errors.push_back("orphan node '" + n.label + "' has no edges");
    for (NodeId h = 0; h < nodes_.size(); ++h) {
      const Node& p = nodes_[h];
      const auto& pc = p.layer.config();
      if (p.children.size() == 1) {
        const Node& c = nodes_[p.children[0]];
        if (c.layer.config().d_sum != pc.d_in)
          errors.push_back("dim mismatch on edge " + c.label + " -> " + p.label + ": summary dim " +
                           std::to_string(c.layer.config().d_sum) + " != input dim " + std::to_string(pc.d_in));
      } else if (p.children.size() > 1) {
        const std::size_t m = nodes_[p.children[0]].layer.config().d_sum;
        for (NodeId c : p.children)
          if (nodes_[c].layer.config().d_sum != m)
            errors.push_back("dim mismatch on edge " + nodes_[c].label + " -> " + p.label +
                             ": merged summaries must share one dim (" + std::to_string(m) + " vs " +
                             std::to_string(nodes_[c].layer.config().d_sum) + ")");
        if (pc.d_in >= p.children.size() * m)
          errors.push_back("input merge at '" + p.label + "' does not compress: d_in " + std::to_string(pc.d_in) +
                           " >= " + std::to_string(p.children.size() * m));
      }
      const auto& cc = pc;
      if (p.parents.size() == 1) {
        const Node& q = nodes_[p.parents[0]];
        if (q.layer.config().d_in != cc.d_ctx)
          errors.push_back("dim mismatch on edge " + p.label + " -> " + q.label + ": prediction dim " +
                           std::to_string(q.layer.config().d_in) + " != context dim " + std::to_string(cc.d_ctx));
      } else if (p.parents.size() > 1) {
        const std::size_t m = nodes_[p.parents[0]].layer.config().d_in;
        for (NodeId q : p.parents)
          if (nodes_[q].layer.config().d_in != m)
            errors.push_back("dim mismatch on edge " + p.label + " -> " + nodes_[q].label +
                             ": merged predictions must share one dim");
        if (cc.d_ctx >= p.parents.size() * m)
          errors.push_back("context merge at '" + p.label + "' does not compress: d_ctx " +
                           std::to_string(cc.d_ctx) + " >= " + std::to_string(p.parents.size() * m));
      }
    }
    return errors;
  }

  // Checks the graph, builds merge units and caches the evaluation order.
  void validate() {
    const auto errors = check();
    if (!errors.empty()) {
      std::string msg = "graph validation failed:";
      for (const auto& e : errors) msg += "\n  " + e;
      throw GraphError(msg);
    }
    std::vector<NodeId> stuck;
    order_.clear();
    kahn(order_, stuck);
    for (NodeId i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      const auto& cfg = n.layer.config();
      n.input_slots.assign(n.children.size(), std::nullopt);
      n.input_stamps.assign(n.children.size(), 0);
      n.context_slots.clear();
      n.context_stamps.assign(n.parents.size(), 0);
      for (NodeId p : n.parents) n.context_slots.push_back(nodes_[p].layer.peek_prediction());
      n.input_merge.reset();
      n.context_merge.reset();
      if (n.children.size() > 1) {
        const std::size_t m = nodes_[n.children[0]].layer.config().d_sum;
        n.input_merge = Pooler(PoolerShape::standard(m, n.children.size(), cfg.d_in), rng_, n.label + ".input_merge");
      }
      if (n.parents.size() > 1) {
        const std::size_t m = nodes_[n.parents[0]].layer.config().d_in;
        n.context_merge =
            Pooler(PoolerShape::standard(m, n.parents.size(), cfg.d_ctx), rng_, n.label + ".context_merge");
      }
      n.context_stamp.reset();
    }
    validated_ = true;
    tick_ = 0;
  }

  std::uint64_t ticks() const { return tick_; }

  TickReport tick(const std::map<NodeId, SignalVector>& inputs, double gain = 1.0) {
    require_validated();
    for (NodeId b : bottoms())
      if (!inputs.count(b)) throw GraphError("missing input for bottom node '" + nodes_[b].label + "'");
    for (const auto& [id, v] : inputs) {
      check_id(id);
      if (!nodes_[id].children.empty())
        throw GraphError("input supplied to non-bottom node '" + nodes_[id].label + "'");
    }

    TickReport report;
    report.tick = ++tick_;
    report.gain = gain;
    report.nodes.resize(nodes_.size());

    for (NodeId id : order_) {
      Node& n = nodes_[id];
      NodeReport& nr = report.nodes[id];
      nr.effective_lr = n.layer.config().base_lr * gain;
      std::optional<SignalVector> x;
      if (n.children.empty()) {
        x = inputs.at(id);
      } else {
        x = take_merged_input(id, gain);
      }
      if (!x) continue;
      nr.context_stamp = n.context_stamp;
      feed_node(id, *x, gain, report.tick, nr);
    }

    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      const NodeId id = *it;
      Node& n = nodes_[id];
      for (std::size_t j = 0; j < n.parents.size(); ++j) {
        const Node& p = nodes_[n.parents[j]];
        if (!(n.context_slots[j] == p.layer.peek_prediction())) {
          n.context_slots[j] = p.layer.peek_prediction();
          n.context_dirty = true;
        }
        n.context_stamps[j] = report.tick;
      }
      apply_context(id, gain, report.tick);
    }
    return report;
  }

  // Single-bottom convenience.
  TickReport tick(const SignalVector& input, double gain = 1.0) {
    const auto b = bottoms();
    if (b.size() != 1) throw GraphError("tick(vector) requires exactly one bottom node");
    return tick(std::map<NodeId, SignalVector>{{b[0], input}}, gain);
  }

  template <typename Archive>
  void persist(Archive& ar) {
    std::uint64_t count = nodes_.size();
    ar.field(count);
    if (count != nodes_.size()) throw CheckpointError("checkpoint node count mismatch");
    ar.field(tick_);
    ar.field(rng_);
    for (auto& n : nodes_) {
      n.layer.persist(ar);
      bool has_in = n.input_merge.has_value();
      bool has_ctx = n.context_merge.has_value();
      ar.field(has_in);
      ar.field(has_ctx);
      if (has_in != n.input_merge.has_value() || has_ctx != n.context_merge.has_value())
        throw CheckpointError("checkpoint merge layout mismatch at '" + n.label + "'");
      if (n.input_merge) ar.field(n.input_merge->parameters());
      if (n.context_merge) ar.field(n.context_merge->parameters());
      std::uint64_t slots = n.input_slots.size();
      ar.field(slots);
      if (slots != n.input_slots.size()) throw CheckpointError("checkpoint slot layout mismatch");
      for (std::size_t j = 0; j < n.input_slots.size(); ++j) {
        bool present = n.input_slots[j].has_value();
        ar.field(present);
        if (present) {
          if (!n.input_slots[j]) n.input_slots[j] = SignalVector();
          ar.field(*n.input_slots[j]);
        } else {
          n.input_slots[j].reset();
        }
        ar.field(n.input_stamps[j]);
      }
      ar.field(n.context_slots);
      for (auto& s : n.context_stamps) ar.field(s);
      ar.field(n.context_dirty);
      bool has_stamp = n.context_stamp.has_value();
      ar.field(has_stamp);
      std::uint64_t stamp = n.context_stamp.value_or(0);
      ar.field(stamp);
      if (has_stamp)
        n.context_stamp = stamp;
      else
        n.context_stamp.reset();
    }
  }

 private:
  friend class AsyncRunner;

  struct Node {
    std::string label;
    Layer layer;
    std::vector<NodeId> children;
    std::vector<NodeId> parents;
    std::optional<Pooler> input_merge;
    std::optional<Pooler> context_merge;
    // Latest summary held per child until every child has emitted.
    std::vector<std::optional<SignalVector>> input_slots;
    std::vector<std::uint64_t> input_stamps;
    // Latest prediction received from each parent.
    std::vector<SignalVector> context_slots;
    std::vector<std::uint64_t> context_stamps;
    bool context_dirty = false;
    std::optional<std::uint64_t> context_stamp;
  };

  Node& node(NodeId n) {
    check_id(n);
    return nodes_[n];
  }
  const Node& node(NodeId n) const {
    check_id(n);
    return nodes_[n];
  }

  void check_id(NodeId n) const {
    if (n >= nodes_.size()) throw GraphError("unknown node id " + std::to_string(n));
  }

  void require_validated() const {
    if (!validated_) throw GraphError("graph must be validated before use");
  }

  // Kahn's algorithm; ready nodes are taken in insertion order.
  void kahn(std::vector<NodeId>& order, std::vector<NodeId>& stuck) const {
    std::vector<std::size_t> pending(nodes_.size());
    for (NodeId i = 0; i < nodes_.size(); ++i) pending[i] = nodes_[i].children.size();
    std::vector<bool> done(nodes_.size(), false);
    bool progress = true;
    while (progress) {
      progress = false;
      for (NodeId i = 0; i < nodes_.size(); ++i) {
        if (done[i] || pending[i] != 0) continue;
        done[i] = true;
        order.push_back(i);
        for (NodeId p : nodes_[i].parents) --pending[p];
        progress = true;
        break;
      }
    }
    for (NodeId i = 0; i < nodes_.size(); ++i)
      if (!done[i]) stuck.push_back(i);
  }

  void deposit_summary(NodeId child, const SignalVector& summary, std::uint64_t stamp) {
    for (NodeId p : nodes_[child].parents) {
      Node& pn = nodes_[p];
      const auto pos = std::find(pn.children.begin(), pn.children.end(), child) - pn.children.begin();
      pn.input_slots[pos] = summary;
      pn.input_stamps[pos] = stamp;
    }
  }

  // Merged input once every child slot is filled; clears the slots.
  std::optional<SignalVector> take_merged_input(NodeId id, double gain) {
    Node& n = nodes_[id];
    for (const auto& s : n.input_slots)
      if (!s) return std::nullopt;
    SignalVector x;
    if (n.children.size() == 1) {
      x = *n.input_slots[0];
    } else {
      std::vector<SignalVector> parts;
      for (auto& s : n.input_slots) parts.push_back(*s);
      const SignalVector flat = concat(parts);
      n.input_merge->train_flat(flat, n.layer.config().pooler_lr() * gain);
      x = n.input_merge->encode_flat(flat);
    }
    for (auto& s : n.input_slots) s.reset();
    return x;
  }

  void feed_node(NodeId id, const SignalVector& x, double gain, std::uint64_t stamp, NodeReport& nr) {
    Node& n = nodes_[id];
    FeedResult r;
    try {
      r = n.layer.feed(x, gain);
    } catch (const DivergenceError& e) {
      throw DivergenceError(e.unit(), e.lr(), "node '" + n.label + "': " + e.detail());
    }
    nr.fed = true;
    nr.input = x;
    nr.pre_prediction = std::move(r.pre_prediction);
    nr.ar_loss = r.ar_loss;
    nr.pool_loss = r.pool_loss;
    if (r.summary) {
      nr.emitted = true;
      nr.summary = *r.summary;
      nr.window = std::move(r.window);
      nr.reconstruction = std::move(r.reconstruction);
      deposit_summary(id, *r.summary, stamp);
    }
  }

  void apply_context(NodeId id, double gain, std::uint64_t stamp) {
    Node& n = nodes_[id];
    if (n.parents.empty() || !n.context_dirty) return;
    n.context_dirty = false;
    SignalVector c;
    if (n.parents.size() == 1) {
      c = n.context_slots[0];
    } else {
      const SignalVector flat = concat(n.context_slots);
      n.context_merge->train_flat(flat, n.layer.config().pooler_lr() * gain);
      c = n.context_merge->encode_flat(flat);
    }
    n.layer.set_context(c);
    n.context_stamp = stamp;
  }

  std::vector<Node> nodes_;
  std::unordered_map<std::string, NodeId> by_label_;
  std::vector<NodeId> order_;
  bool validated_ = false;
  std::uint64_t tick_ = 0;
  SeededRng rng_;
};

}  // namespace hica
