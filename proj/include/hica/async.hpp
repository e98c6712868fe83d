#pragma once

// Actor-style runtime for a validated HetGraph. Each node owns a bounded
// inbox of feedforward messages and a register of the latest prediction from
// each parent. Workers pick runnable nodes from a shared ready queue; a node
// is never processed by two workers at once, so its layer stays single-owner.
//
// Backpressure: a node whose parent's inbox is full parks the message in its
// own outbox and stops consuming until the parent drains. The driver blocks
// when a bottom inbox is full. Inputs only flow upward, so the top node can
// always drain and no cycle of waits can form.
//
// With one worker the runner executes the lockstep tick() schedule, which is
// the deterministic contract. With more workers, arrival order varies and
// results are comparable only statistically.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hica/graph.hpp"

namespace hica {

struct AsyncOptions {
  std::size_t workers = 1;
  std::size_t mailbox_capacity = 64;
};

struct NodeEvent {
  NodeId node = 0;
  std::uint64_t stamp = 0;  // driver tick of the newest bottom input behind this feed
  double gain = 1.0;
  NodeReport report;
};

struct AsyncStats {
  std::uint64_t messages = 0;
  std::uint64_t producer_stalls = 0;
  std::uint64_t driver_stalls = 0;
  std::size_t max_inbox = 0;
};

using InputFn = std::function<std::map<NodeId, SignalVector>(std::uint64_t tick)>;
using GainFn = std::function<double(std::uint64_t tick)>;
using EventFn = std::function<void(const NodeEvent&)>;

class AsyncRunner {
 public:
  AsyncRunner(HetGraph& graph, AsyncOptions opt) : g_(graph), opt_(opt) {
    if (opt.workers == 0) throw Error("async: worker_count must be at least 1");
    if (opt.mailbox_capacity == 0) throw Error("async: mailbox capacity must be positive");
    g_.require_validated();
  }

  const AsyncStats& stats() const { return stats_; }

  // Runs ticks 1..count. Events are delivered one at a time (never concurrently).
  void run(std::uint64_t count, const InputFn& inputs, const GainFn& gain, const EventFn& on_event) {
    if (opt_.workers == 1) {
      run_lockstep(count, inputs, gain, on_event);
    } else {
      run_parallel(count, inputs, gain, on_event);
    }
  }

 private:
  struct InMsg {
    std::size_t slot = 0;  // child position; 0 for bottom inputs
    SignalVector value;
    std::uint64_t stamp = 0;
    double gain = 1.0;
  };

  struct Outgoing {
    NodeId to = 0;
    InMsg msg;
  };

  struct Actor {
    std::mutex m;
    std::condition_variable space;
    std::deque<InMsg> inbox;
    std::vector<SignalVector> ctx_reg;
    bool ctx_new = false;
    double ctx_gain = 1.0;
    std::uint64_t ctx_stamp = 0;
    bool scheduled = false;
    bool notified = false;
    std::vector<NodeId> waiters;
    // Touched only by the worker currently running this node.
    std::deque<Outgoing> outbox;
    std::vector<std::uint64_t> input_stamps;
  };

  void run_lockstep(std::uint64_t count, const InputFn& inputs, const GainFn& gain, const EventFn& on_event) {
    for (std::uint64_t t = 1; t <= count; ++t) {
      const double gn = gain(t);
      const auto in = inputs(t);
      const TickReport rep = g_.tick(in, gn);
      stats_.messages += in.size();
      for (NodeId id : g_.order()) {
        if (!rep.nodes[id].fed) continue;
        on_event(NodeEvent{id, t, gn, rep.nodes[id]});
      }
    }
  }

  void run_parallel(std::uint64_t count, const InputFn& inputs, const GainFn& gain, const EventFn& on_event) {
    on_event_ = &on_event;
    actors_.clear();
    last_message_.assign(g_.size(), "no message");
    for (NodeId i = 0; i < g_.size(); ++i) {
      auto a = std::make_unique<Actor>();
      a->ctx_reg = g_.nodes_[i].context_slots;
      a->input_stamps.assign(g_.nodes_[i].children.size(), 0);
      actors_.push_back(std::move(a));
    }
    done_ = false;
    failed_ = false;
    active_ = 0;
    error_.clear();

    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < opt_.workers; ++w) pool.emplace_back([this] { worker(); });

    const auto bottoms = g_.bottoms();
    try {
      for (std::uint64_t t = 1; t <= count && !failed_; ++t) {
        auto in = inputs(t);
        const double gn = gain(t);
        for (NodeId b : bottoms) {
          auto it = in.find(b);
          if (it == in.end()) throw GraphError("missing input for bottom node '" + g_.label(b) + "'");
          Actor& a = *actors_[b];
          std::unique_lock lk(a.m);
          if (a.inbox.size() >= opt_.mailbox_capacity) ++stats_.driver_stalls;
          a.space.wait(lk, [&] { return a.inbox.size() < opt_.mailbox_capacity || failed_; });
          if (failed_) break;
          a.inbox.push_back(InMsg{0, std::move(it->second), t, gn});
          note_inbox(a.inbox.size());
          lk.unlock();
          schedule(b);
        }
      }
    } catch (...) {
      stop_workers(pool);
      throw;
    }
    {
      std::unique_lock lk(q_m_);
      driver_done_ = true;
      q_cv_.notify_all();
      idle_cv_.wait(lk, [&] { return active_ == 0 || failed_; });
      done_ = true;
      q_cv_.notify_all();
    }
    for (auto& th : pool) th.join();
    driver_done_ = false;
    if (failed_) throw Error(error_);
    g_.tick_ += count;
    // Fold the registers back so a later lockstep tick sees the same contexts.
    for (NodeId i = 0; i < g_.size(); ++i)
      if (actors_[i]->ctx_new) {
        g_.nodes_[i].context_slots = actors_[i]->ctx_reg;
        g_.nodes_[i].context_dirty = true;
      }
  }

  void stop_workers(std::vector<std::thread>& pool) {
    {
      std::lock_guard lk(q_m_);
      failed_ = true;
      done_ = true;
      q_cv_.notify_all();
    }
    for (auto& a : actors_) {
      std::lock_guard lk(a->m);
      a->space.notify_all();
    }
    for (auto& th : pool) th.join();
  }

  void note_inbox(std::size_t n) {
    std::lock_guard lk(stats_m_);
    ++stats_.messages;
    if (n > stats_.max_inbox) stats_.max_inbox = n;
  }

  void schedule(NodeId id) {
    Actor& a = *actors_[id];
    bool enqueue = false;
    {
      std::lock_guard lk(a.m);
      if (a.scheduled) {
        a.notified = true;
      } else {
        a.scheduled = true;
        enqueue = true;
      }
    }
    if (enqueue) {
      std::lock_guard lk(q_m_);
      ++active_;
      ready_.push_back(id);
      q_cv_.notify_one();
    }
  }

  void worker() {
    for (;;) {
      NodeId id;
      {
        std::unique_lock lk(q_m_);
        q_cv_.wait(lk, [&] { return !ready_.empty() || done_; });
        if (ready_.empty()) return;
        id = ready_.front();
        ready_.pop_front();
      }
      bool again = false;
      try {
        again = step(id);
      } catch (const std::exception& e) {
        fail(id, e.what());
        again = false;
      }
      if (again) {
        std::lock_guard lk(q_m_);
        ready_.push_back(id);
        q_cv_.notify_one();
      } else {
        std::lock_guard lk(q_m_);
        --active_;
        if (active_ == 0) idle_cv_.notify_all();
      }
    }
  }

  void fail(NodeId id, const std::string& what) {
    std::lock_guard lk(q_m_);
    if (!failed_) {
      error_ = "node '" + g_.label(id) + "' failed on " + last_message_[id] + ": " + what;
      failed_ = true;
    }
    done_ = true;
    ready_.clear();
    q_cv_.notify_all();
    idle_cv_.notify_all();
    for (auto& a : actors_) {
      std::lock_guard al(a->m);
      a->space.notify_all();
    }
  }

  // Processes at most one message for `id`. Returns true when the node should
  // stay on the ready queue.
  bool step(NodeId id) {
    Actor& a = *actors_[id];
    if (failed_) {
      std::lock_guard lk(a.m);
      a.scheduled = false;
      return false;
    }
    flush_outbox(id);

    std::optional<InMsg> msg;
    bool ctx = false;
    std::vector<SignalVector> ctx_values;
    double ctx_gain = 1.0;
    std::uint64_t ctx_stamp = 0;
    std::vector<NodeId> wake;
    if (a.outbox.empty()) {
      std::lock_guard lk(a.m);
      if (a.ctx_new) {
        ctx = true;
        ctx_values = a.ctx_reg;
        ctx_gain = a.ctx_gain;
        ctx_stamp = a.ctx_stamp;
        a.ctx_new = false;
      } else if (!a.inbox.empty()) {
        msg = std::move(a.inbox.front());
        a.inbox.pop_front();
        wake.swap(a.waiters);
        a.space.notify_all();
      }
    }
    for (NodeId w : wake) schedule(w);

    if (ctx) {
      last_message_[id] = "context stamped " + std::to_string(ctx_stamp);
      handle_context(id, std::move(ctx_values), ctx_gain, ctx_stamp);
    } else if (msg) {
      last_message_[id] = "input stamped " + std::to_string(msg->stamp) + " from slot " + std::to_string(msg->slot);
      handle_input(id, std::move(*msg));
    }
    flush_outbox(id);

    std::lock_guard lk(a.m);
    const bool has_work = a.outbox.empty() && (a.ctx_new || !a.inbox.empty());
    const bool again = a.notified || has_work;
    a.notified = false;
    if (!again) a.scheduled = false;
    return again;
  }

  void handle_context(NodeId id, std::vector<SignalVector> values, double gain, std::uint64_t stamp) {
    auto& n = g_.nodes_[id];
    n.context_slots = std::move(values);
    n.context_dirty = true;
    g_.apply_context(id, gain, stamp);
    broadcast_prediction(id, gain, stamp);
  }

  void handle_input(NodeId id, InMsg msg) {
    Actor& a = *actors_[id];
    auto& n = g_.nodes_[id];
    std::optional<SignalVector> x;
    std::uint64_t stamp = msg.stamp;
    if (n.children.empty()) {
      x = std::move(msg.value);
    } else {
      n.input_slots[msg.slot] = std::move(msg.value);
      a.input_stamps[msg.slot] = msg.stamp;
      x = g_.take_merged_input(id, msg.gain);
      for (auto s : a.input_stamps) stamp = std::max(stamp, s);
    }
    if (!x) return;

    NodeReport nr;
    nr.effective_lr = n.layer.config().base_lr * msg.gain;
    nr.context_stamp = n.context_stamp;
    FeedResult r;
    try {
      r = n.layer.feed(*x, msg.gain);
    } catch (const DivergenceError& e) {
      throw DivergenceError(e.unit(), e.lr(), "node '" + n.label + "': " + e.detail());
    }
    nr.fed = true;
    nr.input = std::move(*x);
    nr.pre_prediction = std::move(r.pre_prediction);
    nr.ar_loss = r.ar_loss;
    nr.pool_loss = r.pool_loss;
    if (r.summary) {
      nr.emitted = true;
      nr.summary = *r.summary;
      nr.window = std::move(r.window);
      nr.reconstruction = std::move(r.reconstruction);
      for (NodeId p : n.parents) {
        const auto& pc = g_.nodes_[p].children;
        const std::size_t pos = std::find(pc.begin(), pc.end(), id) - pc.begin();
        a.outbox.push_back(Outgoing{p, InMsg{pos, *r.summary, stamp, msg.gain}});
      }
    }
    {
      std::lock_guard lk(ev_m_);
      (*on_event_)(NodeEvent{id, stamp, msg.gain, std::move(nr)});
    }
    broadcast_prediction(id, msg.gain, stamp);
  }

  // Contexts never block: each child keeps only the latest value per parent.
  void broadcast_prediction(NodeId id, double gain, std::uint64_t stamp) {
    const auto& n = g_.nodes_[id];
    const SignalVector& pred = n.layer.peek_prediction();
    for (NodeId c : n.children) {
      Actor& ca = *actors_[c];
      const auto& cp = g_.nodes_[c].parents;
      const std::size_t pos = std::find(cp.begin(), cp.end(), id) - cp.begin();
      {
        std::lock_guard lk(ca.m);
        if (ca.ctx_reg[pos] == pred) continue;
        ca.ctx_reg[pos] = pred;
        ca.ctx_new = true;
        ca.ctx_gain = gain;
        ca.ctx_stamp = stamp;
      }
      schedule(c);
    }
  }

  void flush_outbox(NodeId id) {
    Actor& a = *actors_[id];
    while (!a.outbox.empty()) {
      Outgoing& o = a.outbox.front();
      Actor& dest = *actors_[o.to];
      {
        std::lock_guard lk(dest.m);
        if (dest.inbox.size() >= opt_.mailbox_capacity) {
          dest.waiters.push_back(id);
          std::lock_guard sl(stats_m_);
          ++stats_.producer_stalls;
          return;
        }
        dest.inbox.push_back(std::move(o.msg));
        note_inbox(dest.inbox.size());
      }
      const NodeId to = o.to;
      a.outbox.pop_front();
      schedule(to);
    }
  }

  HetGraph& g_;
  AsyncOptions opt_;
  AsyncStats stats_;
  std::mutex stats_m_;
  std::vector<std::unique_ptr<Actor>> actors_;
  std::vector<std::string> last_message_;
  std::mutex ev_m_;
  const EventFn* on_event_ = nullptr;

  std::mutex q_m_;
  std::condition_variable q_cv_;
  std::condition_variable idle_cv_;
  std::deque<NodeId> ready_;
  std::size_t active_ = 0;
  bool done_ = false;
  bool driver_done_ = false;
  std::atomic<bool> failed_{false};
  std::string error_;
};

inline AsyncStats run_async(HetGraph& graph, std::uint64_t ticks, const InputFn& inputs, const GainFn& gain,
                            const EventFn& on_event, AsyncOptions opt = {}) {
  AsyncRunner runner(graph, opt);
  runner.run(ticks, inputs, gain, on_event);
  return runner.stats();
}

}  // namespace hica
