#pragma once

// Run-level checkpoints. Each payload starts with a kind tag and the JSON
// configuration text it was produced under, so a checkpoint rebuilds its own
// object shapes before the parameter blocks are read back.

#include <optional>
#include <string>

#include "hica/archive.hpp"
#include "hica/charlm.hpp"
#include "hica/config.hpp"
#include "hica/skinner.hpp"

namespace hica {

inline CharLmState make_charlm_state(const RunConfig& cfg, std::string corpus) {
  if (!cfg.graph) throw ConfigError("graph", "missing required section");
  if (!cfg.charlm) throw ConfigError("charlm", "missing required section");
  CharLmState st;
  st.stream = CharStream::from_corpus(std::move(corpus), cfg.charlm->wrap);
  st.graph = build_graph(*cfg.graph, cfg.seed, st.stream.codec().size());
  st.meter = AccuracyMeter::for_graph(st.graph, cfg.charlm->log_interval, cfg.charlm->cosine_threshold);
  st.modulator = Modulator(cfg.modulator);
  return st;
}

namespace detail {

inline std::string tagged_payload(const std::string& kind, const std::string& config_text, const std::string& body) {
  BinaryWriter w;
  std::string k = kind, c = config_text;
  w.field(k);
  w.field(c);
  return w.bytes() + body;
}

// Returns the config text and leaves `r` positioned at the body.
inline std::string read_tag(BinaryReader& r, const std::string& kind) {
  std::string k, c;
  r.field(k);
  if (k != kind) throw CheckpointError("checkpoint holds '" + k + "', expected '" + kind + "'");
  r.field(c);
  return c;
}

}  // namespace detail

inline std::string charlm_checkpoint_bytes(const std::string& config_text, CharLmState& st) {
  return frame_checkpoint(detail::tagged_payload("charlm", config_text, to_bytes(st)));
}

struct LoadedCharLm {
  std::string config_text;
  RunConfig config;
  CharLmState state;
};

// `corpus` overrides reading the corpus path stored in the echoed config.
inline LoadedCharLm load_charlm_checkpoint(std::string_view file, std::optional<std::string> corpus = std::nullopt) {
  const std::string payload = unframe_checkpoint(file);
  BinaryReader r(payload);
  LoadedCharLm out;
  out.config_text = detail::read_tag(r, "charlm");
  out.config = parse_config_text(out.config_text);
  out.state = make_charlm_state(out.config, corpus ? *corpus : read_file(out.config.charlm->corpus));
  out.state.persist(r);
  if (!r.at_end()) throw CheckpointError("checkpoint has unread trailing data");
  return out;
}

inline std::string instinct_checkpoint_bytes(const std::string& config_text, InstinctBundle& b) {
  return frame_checkpoint(detail::tagged_payload("instinct", config_text, to_bytes(b)));
}

inline InstinctBundle load_instinct_checkpoint(std::string_view file) {
  const std::string payload = unframe_checkpoint(file);
  BinaryReader r(payload);
  detail::read_tag(r, "instinct");
  InstinctBundle b;
  b.persist(r);
  if (!r.at_end()) throw CheckpointError("checkpoint has unread trailing data");
  return b;
}

}  // namespace hica
