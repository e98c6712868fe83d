#include <gtest/gtest.h>

#include "hica/async.hpp"

using namespace hica;

namespace {

HetGraph chain3(std::uint64_t seed) {
  SeededRng rng(seed);
  HetGraph g(seed);
  std::vector<NodeId> ids;
  for (std::size_t i = 0; i < 3; ++i) {
    LayerConfig c;
    c.d_in = i == 0 ? 4 : 3;
    c.d_sum = 3;
    c.d_ctx = i < 2 ? 3 : 0;
    c.w = 2;
    c.ar_hidden = 6;
    c.pool_hidden = 6;
    c.kind = i == 0 ? OutputKind::token : OutputKind::continuous;
    ids.push_back(g.add_node(Layer(c, rng), "L" + std::to_string(i + 1)));
  }
  g.add_edge(ids[0], ids[1]);
  g.add_edge(ids[1], ids[2]);
  g.validate();
  return g;
}

InputFn stream(std::uint64_t seed) {
  return [seed](std::uint64_t t) {
    SeededRng r(derive_seed(seed, t));
    SignalVector v(4);
    v[r.below(4)] = 1.0;
    return std::map<NodeId, SignalVector>{{0, v}};
  };
}

const GainFn unit_gain = [](std::uint64_t) { return 1.0; };

}  // namespace

TEST(Async, OneWorkerMatchesDirectTicks) {
  HetGraph a = chain3(1), b = chain3(1);
  std::vector<NodeEvent> events;
  run_async(a, 300, stream(5), unit_gain, [&](const NodeEvent& e) { events.push_back(e); }, {1, 8});
  std::size_t i = 0;
  auto in = stream(5);
  for (std::uint64_t t = 1; t <= 300; ++t) {
    const TickReport rep = b.tick(in(t));
    for (NodeId id : b.order()) {
      if (!rep.nodes[id].fed) continue;
      ASSERT_LT(i, events.size());
      EXPECT_EQ(events[i].node, id);
      EXPECT_EQ(events[i].stamp, t);
      ASSERT_EQ(events[i].report, rep.nodes[id]) << "tick " << t << " node " << id;
      ++i;
    }
  }
  EXPECT_EQ(i, events.size());
  EXPECT_EQ(a.ticks(), b.ticks());
}

TEST(Async, FourWorkersLoseNoMessagesUnderBackpressure) {
  HetGraph g = chain3(2);
  std::vector<std::uint64_t> fed(3, 0);
  std::vector<std::uint64_t> last_stamp(3, 0);
  bool ordered = true;
  const AsyncStats stats = run_async(
      g, 4096, stream(6), unit_gain,
      [&](const NodeEvent& e) {
        ++fed[e.node];
        if (e.stamp < last_stamp[e.node]) ordered = false;
        last_stamp[e.node] = e.stamp;
      },
      {4, 1});
  EXPECT_EQ(fed[0], 4096u);
  EXPECT_EQ(fed[1], 1024u);
  EXPECT_EQ(fed[2], 256u);
  EXPECT_TRUE(ordered);
  EXPECT_LE(stats.max_inbox, 1u);
  EXPECT_GT(stats.driver_stalls + stats.producer_stalls, 0u);
  for (std::size_t level = 0; level < 3; ++level)
    EXPECT_EQ(g.layer(level).summaries_emitted(), 4096u >> (2 * (level + 1)));
  EXPECT_EQ(g.ticks(), 4096u);
}

TEST(Async, GraphKeepsWorkingAfterAParallelRun) {
  HetGraph g = chain3(3);
  run_async(g, 64, stream(7), unit_gain, [](const NodeEvent&) {}, {3, 4});
  const TickReport rep = g.tick(stream(7)(65));
  EXPECT_EQ(rep.tick, 65u);
  EXPECT_TRUE(rep.nodes[0].fed);
}

TEST(Async, RejectsBadOptions) {
  HetGraph g = chain3(4);
  EXPECT_THROW(AsyncRunner(g, {0, 4}), Error);
  EXPECT_THROW(AsyncRunner(g, {2, 0}), Error);
}

TEST(Async, WorkerFailureSurfacesWithNodeLabel) {
  HetGraph g = chain3(5);
  g.layer(0).set_base_lr(1e4);
  auto bad = [](std::uint64_t t) {
    SignalVector v(4);
    v[t % 4] = 1e4;
    return std::map<NodeId, SignalVector>{{0, v}};
  };
  try {
    run_async(g, 2000, bad, unit_gain, [](const NodeEvent&) {}, {2, 4});
    FAIL() << "expected failure";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("L1"), std::string::npos) << e.what();
  }
}
