#pragma once

// Versioned, checksummed, little-endian binary persistence.
//
// File layout:
//   bytes 0..7   magic "HICACKPT"
//   u32          format version
//   u64          payload length N
//   N bytes      payload
//   u32          CRC-32 (zlib polynomial) of the payload
//
// Every integer is little-endian; doubles are stored as their IEEE-754 bit
// pattern in a little-endian u64. Classes expose `template <class A> void
// persist(A&)` and the same function drives both reading and writing.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "hica/errors.hpp"
#include "hica/signal.hpp"

namespace hica {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'H', 'I', 'C', 'A', 'C', 'K', 'P', 'T'};

class BinaryWriter {
 public:
  static constexpr bool reading = false;

  const std::string& bytes() const { return buf_; }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  void field(std::uint64_t& v) { u64(v); }
  void field(std::int64_t& v) { u64(static_cast<std::uint64_t>(v)); }
  void field(std::uint32_t& v) { u32(v); }
  void field(double& v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void field(bool& v) { buf_.push_back(v ? 1 : 0); }
  void field(std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  void field(std::span<double> values) {
    u64(values.size());
    for (double v : values) u64(std::bit_cast<std::uint64_t>(v));
  }
  void field(std::vector<double>& values) { field(std::span<double>(values)); }
  void field(SignalVector& v) { field(v.values()); }
  void field(std::vector<SignalVector>& vs, std::size_t = 0) {
    u64(vs.size());
    for (auto& v : vs) field(v);
  }
  void field(std::deque<SignalVector>& vs, std::size_t = 0) {
    u64(vs.size());
    for (auto& v : vs) field(v);
  }
  void field(SeededRng& rng) {
    std::string s = rng.state();
    field(s);
  }

 private:
  std::string buf_;
};

class BinaryReader {
 public:
  static constexpr bool reading = true;

  explicit BinaryReader(std::string_view bytes) : buf_(bytes) {}

  bool at_end() const { return pos_ == buf_.size(); }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  void field(std::uint64_t& v) { v = u64(); }
  void field(std::int64_t& v) { v = static_cast<std::int64_t>(u64()); }
  void field(std::uint32_t& v) { v = u32(); }
  void field(double& v) { v = std::bit_cast<double>(u64()); }
  void field(bool& v) {
    need(1);
    v = buf_[pos_++] != 0;
  }
  void field(std::string& s) {
    const std::uint64_t n = u64();
    need(n);
    s.assign(buf_.substr(pos_, n));
    pos_ += n;
  }
  // Reads into existing storage; the stored length must match.
  void field(std::span<double> values) {
    const std::uint64_t n = u64();
    if (n != values.size())
      throw CheckpointError("checkpoint shape mismatch: expected " + std::to_string(values.size()) +
                            " values, found " + std::to_string(n));
    for (double& v : values) v = std::bit_cast<double>(u64());
  }
  void field(std::vector<double>& values) {
    const std::uint64_t n = u64();
    need(n * 8);
    values.resize(n);
    for (double& v : values) v = std::bit_cast<double>(u64());
  }
  void field(SignalVector& v) {
    std::vector<double> raw;
    field(raw);
    v = SignalVector(std::move(raw));
  }
  void field(std::vector<SignalVector>& vs, std::size_t = 0) {
    const std::uint64_t n = u64();
    vs.assign(n, SignalVector());
    for (auto& v : vs) field(v);
  }
  void field(std::deque<SignalVector>& vs, std::size_t = 0) {
    const std::uint64_t n = u64();
    vs.assign(n, SignalVector());
    for (auto& v : vs) field(v);
  }
  void field(SeededRng& rng) {
    std::string s;
    field(s);
    rng.set_state(s);
  }

 private:
  void need(std::uint64_t n) const {
    if (n > buf_.size() - pos_) throw CheckpointError("checkpoint truncated");
  }

  std::string_view buf_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

// Wraps a payload in the framed, checksummed layout.
inline std::string frame_checkpoint(const std::string& payload, std::uint32_t version = kCheckpointVersion) {
  BinaryWriter w;
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(version);
  w.u64(payload.size());
  out += w.bytes();
  out += payload;
  BinaryWriter tail;
  tail.u32(crc32_of(payload));
  out += tail.bytes();
  return out;
}

// Validates framing and returns the payload.
inline std::string unframe_checkpoint(std::string_view file) {
  constexpr std::size_t header = sizeof(kCheckpointMagic) + 4 + 8;
  if (file.size() < header + 4) throw CheckpointError("checkpoint truncated");
  if (std::memcmp(file.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw CheckpointError("not a checkpoint file (bad magic)");
  BinaryReader r(file.substr(sizeof(kCheckpointMagic)));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  const std::uint64_t n = r.u64();
  if (file.size() != header + n + 4) throw CheckpointError("checkpoint truncated or has trailing bytes");
  const std::string_view payload = file.substr(header, n);
  BinaryReader tail(file.substr(header + n));
  if (tail.u32() != crc32_of(payload)) throw CheckpointError("checkpoint checksum mismatch");
  return std::string(payload);
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for reading: " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

template <typename T>
std::string to_bytes(T& obj) {
  BinaryWriter w;
  obj.persist(w);
  return w.bytes();
}

template <typename T>
void from_bytes(T& obj, std::string_view bytes) {
  BinaryReader r(bytes);
  obj.persist(r);
  if (!r.at_end()) throw CheckpointError("checkpoint has unread trailing data");
}

}  // namespace hica
