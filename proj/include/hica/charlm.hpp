#pragma once

// Character-stream language modeling on a layer graph: the corpus is fed one
// one-hot character per tick into the bottom node, and every node's
// autoregressor and pooler accuracy is tallied per logging interval.
//
// Metrics CSV (format version 1), one header row:
//   tick                     last tick covered by the row
//   <label>_ar_acc           share of this node's feeds in the interval whose
//                            standing prediction hit the realized input
//   <label>_ae_acc           share of this node's pooler windows in the interval
//                            whose reconstruction hit the window
// one pair per node in evaluation order; an empty field means no samples.
// Bottom (token) nodes hit by argmax identity, per character for the pooler;
// other nodes hit when the cosine similarity reaches the configured threshold.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "hica/archive.hpp"
#include "hica/async.hpp"
#include "hica/graph.hpp"
#include "hica/neuromod.hpp"
#include "hica/signal.hpp"

namespace hica {

class CharStream {
 public:
  CharStream() = default;
  CharStream(std::string corpus, TokenCodec codec, bool wrap = true)
      : corpus_(std::move(corpus)), codec_(std::move(codec)), wrap_(wrap) {
    if (corpus_.empty()) throw Error("char stream: corpus is empty");
    for (char c : corpus_) codec_.index_of(c);
  }

  static CharStream from_corpus(std::string corpus, bool wrap = true) {
    TokenCodec codec = TokenCodec::from_corpus(corpus);
    return CharStream(std::move(corpus), std::move(codec), wrap);
  }

  const TokenCodec& codec() const { return codec_; }
  const std::string& corpus() const { return corpus_; }
  std::uint64_t position() const { return pos_; }
  std::uint64_t passes() const { return pos_ / corpus_.size(); }

  char next() {
    if (!wrap_ && pos_ >= corpus_.size()) throw Error("char stream exhausted after " + std::to_string(pos_) + " chars");
    return corpus_[pos_++ % corpus_.size()];
  }

  SignalVector next_one_hot() { return codec_.one_hot(next()); }

  template <typename Archive>
  void persist(Archive& ar) {
    ar.field(pos_);
  }

 private:
  std::string corpus_;
  TokenCodec codec_;
  bool wrap_ = true;
  std::uint64_t pos_ = 0;
};

struct MeterChannel {
  std::string label;
  bool token = false;
  std::size_t k = 1;
};

class AccuracyMeter {
 public:
  AccuracyMeter() = default;
  AccuracyMeter(std::vector<MeterChannel> channels, std::uint64_t interval, double cosine_threshold = 0.9)
      : channels_(std::move(channels)), interval_(interval), threshold_(cosine_threshold) {
    if (interval == 0) throw Error("accuracy meter: log interval must be positive");
  }

  static AccuracyMeter for_graph(const HetGraph& g, std::uint64_t interval, double cosine_threshold = 0.9) {
    std::vector<MeterChannel> ch(g.size());
    for (NodeId i = 0; i < g.size(); ++i) {
      const auto& cfg = g.layer(i).config();
      ch[i] = {g.label(i), cfg.kind == OutputKind::token, cfg.k};
    }
    AccuracyMeter m(std::move(ch), interval, cosine_threshold);
    m.column_order_ = g.order();
    return m;
  }

  std::uint64_t interval() const { return interval_; }

  std::string header() const {
    std::string h = "tick";
    for (std::size_t i : columns()) h += "," + channels_[i].label + "_ar_acc," + channels_[i].label + "_ae_acc";
    return h;
  }

  bool ar_hit(std::size_t node, const SignalVector& prediction, const SignalVector& realized) const {
    if (channels_[node].token) return argmax(prediction.values()) == argmax(realized.values());
    return cosine(prediction, realized) >= threshold_;
  }

  bool ae_hit(std::size_t node, const SignalVector& reconstruction, const SignalVector& window) const {
    if (!channels_[node].token) return cosine(reconstruction, window) >= threshold_;
    const std::size_t k = channels_[node].k;
    const auto r = split(reconstruction, k);
    const auto w = split(window, k);
    for (std::size_t j = 0; j < k; ++j)
      if (argmax(r[j].values()) != argmax(w[j].values())) return false;
    return true;
  }

  void record(const NodeEvent& e) {
    if (e.node >= channels_.size()) throw Error("accuracy meter: unknown node " + std::to_string(e.node));
    const auto& r = e.report;
    if (!r.fed) return;
    const std::uint64_t b = (e.stamp - 1) / interval_;
    auto& cell = bucket(b)[e.node];
    ++cell.ar_total;
    if (ar_hit(e.node, r.pre_prediction, r.input)) ++cell.ar_hits;
    if (r.window && r.reconstruction) {
      ++cell.ae_total;
      if (ae_hit(e.node, *r.reconstruction, *r.window)) ++cell.ae_hits;
    }
  }

  // Rows for every complete interval ending at or before `tick` not yet taken.
  std::vector<std::string> take_rows(std::uint64_t tick) {
    std::vector<std::string> rows;
    while ((taken_ + 1) * interval_ <= tick) {
      const auto it = buckets_.find(taken_);
      std::string row = std::to_string((taken_ + 1) * interval_);
      for (std::size_t i : columns()) {
        Cell c;
        if (it != buckets_.end()) c = it->second[i];
        row += "," + format(c.ar_hits, c.ar_total) + "," + format(c.ae_hits, c.ae_total);
      }
      rows.push_back(std::move(row));
      if (it != buckets_.end()) buckets_.erase(it);
      ++taken_;
    }
    return rows;
  }

  template <typename Archive>
  void persist(Archive& ar) {
    ar.field(taken_);
    std::uint64_t n = buckets_.size();
    ar.field(n);
    std::vector<std::pair<std::uint64_t, std::vector<Cell>>> items(buckets_.begin(), buckets_.end());
    items.resize(n);
    for (auto& [b, cells] : items) {
      ar.field(b);
      std::uint64_t m = cells.size();
      ar.field(m);
      cells.resize(m);
      for (auto& c : cells) {
        ar.field(c.ar_hits);
        ar.field(c.ar_total);
        ar.field(c.ae_hits);
        ar.field(c.ae_total);
      }
    }
    buckets_.clear();
    for (auto& [b, cells] : items) buckets_[b] = std::move(cells);
  }

 private:
  struct Cell {
    std::uint64_t ar_hits = 0, ar_total = 0, ae_hits = 0, ae_total = 0;
  };

  std::vector<std::size_t> columns() const {
    if (!column_order_.empty()) return column_order_;
    std::vector<std::size_t> c(channels_.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = i;
    return c;
  }

  std::vector<Cell>& bucket(std::uint64_t b) {
    auto& v = buckets_[b];
    if (v.empty()) v.resize(channels_.size());
    return v;
  }

  static std::string format(std::uint64_t hits, std::uint64_t total) {
    if (total == 0) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(hits) / static_cast<double>(total));
    return buf;
  }

  std::vector<MeterChannel> channels_;
  std::vector<std::size_t> column_order_;
  std::uint64_t interval_ = 1;
  double threshold_ = 0.9;
  std::map<std::uint64_t, std::vector<Cell>> buckets_;
  std::uint64_t taken_ = 0;
};

// Everything a char-LM run needs to resume bit-exactly.
struct CharLmState {
  HetGraph graph;
  CharStream stream;
  AccuracyMeter meter;
  Modulator modulator;
  std::uint64_t tick = 0;

  template <typename Archive>
  void persist(Archive& ar) {
    ar.field(tick);
    graph.persist(ar);
    stream.persist(ar);
    meter.persist(ar);
    modulator.persist(ar);
  }
};

struct CharLmOptions {
  std::size_t workers = 1;
  std::size_t mailbox_capacity = 64;
};

// Feeds `ticks` characters. Completed metric rows are written to `csv`
// (when given) and returned.
inline std::vector<std::string> charlm_run(CharLmState& st, std::uint64_t ticks, std::ostream* csv = nullptr,
                                           const CharLmOptions& opt = {}) {
  if (st.graph.bottoms().size() != 1) throw GraphError("char-LM needs exactly one bottom node");
  const NodeId bottom = st.graph.bottoms()[0];
  const std::size_t a = st.stream.codec().size();
  if (st.graph.layer(bottom).config().d_in != a)
    throw DimensionError("bottom node '" + st.graph.label(bottom) + "' d_in vs corpus alphabet", a,
                         st.graph.layer(bottom).config().d_in);
  std::vector<std::string> rows;
  auto flush = [&](std::uint64_t upto) {
    for (auto& r : st.meter.take_rows(upto)) {
      if (csv) *csv << r << '\n';
      rows.push_back(std::move(r));
    }
  };
  auto gain = [&](std::uint64_t) {
    const double g = st.modulator.gain();
    st.modulator.decay_step();
    return g;
  };
  auto inputs = [&](std::uint64_t) {
    std::map<NodeId, SignalVector> in;
    in.emplace(bottom, st.stream.next_one_hot());
    return in;
  };
  // Run in chunks that end on interval boundaries so rows stream out; with
  // several workers each chunk also ends with the graph drained.
  std::uint64_t left = ticks;
  while (left > 0) {
    const std::uint64_t iv = st.meter.interval();
    const std::uint64_t chunk = std::min(left, iv - st.tick % iv);
    const std::uint64_t base = st.tick;
    run_async(
        st.graph, chunk, inputs, gain,
        [&](const NodeEvent& e) {
          NodeEvent shifted = e;
          shifted.stamp = base + e.stamp;
          st.meter.record(shifted);
        },
        AsyncOptions{opt.workers, opt.mailbox_capacity});
    st.tick = base + chunk;
    left -= chunk;
    flush(st.tick);
  }
  if (csv) csv->flush();
  return rows;
}

// Share of positions whose character equals the most frequent character.
inline double unigram_baseline(const std::string& corpus) {
  std::array<std::uint64_t, 256> counts{};
  for (unsigned char c : corpus) ++counts[c];
  std::uint64_t best = 0;
  for (auto c : counts) best = std::max(best, c);
  return corpus.empty() ? 0.0 : static_cast<double>(best) / static_cast<double>(corpus.size());
}

}  // namespace hica
