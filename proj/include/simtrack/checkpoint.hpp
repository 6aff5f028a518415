#pragma once

// Binary checkpoint format, explicitly little-endian regardless of host:
//
//   magic "SIMT" | version u32 | model config | tensor count u64 |
//   per tensor: name_len u32, name bytes, rank u32, dims u64..., f64 data
//
// Loading rebuilds the model from the embedded config and rejects any
// name/shape mismatch, so a round trip is bitwise lossless by construction.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "simtrack/model.hpp"

namespace simtrack {

namespace detail {

constexpr uint32_t kCheckpointVersion = 1;

class LeWriter {
 public:
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void bytes(const std::string& s) { buf_.append(s); }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class LeReader {
 public:
  explicit LeReader(const std::string& s, const std::string& origin)
      : s_(s), origin_(origin) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(byte()) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(byte()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(size_t n) {
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  unsigned char byte() { return static_cast<unsigned char>(s_[pos_++]); }
  void need(size_t n) {
    if (pos_ + n > s_.size()) {
      throw std::runtime_error("truncated checkpoint: " + origin_);
    }
  }
  const std::string& s_;
  std::string origin_;
  size_t pos_ = 0;
};

inline void write_config(LeWriter& w, const ModelConfig& cfg) {
  w.u32(static_cast<uint32_t>(cfg.patch));
  w.u32(static_cast<uint32_t>(cfg.dim));
  w.u32(static_cast<uint32_t>(cfg.layers));
  w.u32(static_cast<uint32_t>(cfg.heads));
  w.u32(static_cast<uint32_t>(cfg.ffn_dim));
  w.u32(static_cast<uint32_t>(cfg.search_size));
  w.u32(static_cast<uint32_t>(cfg.exemplar_size));
  w.u32(static_cast<uint32_t>(cfg.foveal_size));
  w.u32(static_cast<uint32_t>(cfg.decoder_layers));
  w.u64(cfg.seed);
  for (bool g : cfg.interaction.gates) w.u32(g ? 1 : 0);
}

inline ModelConfig read_config(LeReader& r) {
  ModelConfig cfg;
  cfg.patch = static_cast<int>(r.u32());
  cfg.dim = static_cast<int>(r.u32());
  cfg.layers = static_cast<int>(r.u32());
  cfg.heads = static_cast<int>(r.u32());
  cfg.ffn_dim = static_cast<int>(r.u32());
  cfg.search_size = static_cast<int>(r.u32());
  cfg.exemplar_size = static_cast<int>(r.u32());
  cfg.foveal_size = static_cast<int>(r.u32());
  cfg.decoder_layers = static_cast<int>(r.u32());
  cfg.seed = r.u64();
  cfg.interaction.gates.clear();
  for (int l = 0; l < cfg.layers; ++l) cfg.interaction.gates.push_back(r.u32() != 0);
  return cfg;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const TrackModel& model) {
  detail::LeWriter w;
  w.bytes("SIMT");
  w.u32(detail::kCheckpointVersion);
  detail::write_config(w, model.cfg);
  auto params = model.params();
  w.u64(params.size());
  for (auto& [name, p] : params) {
    w.u32(static_cast<uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<uint32_t>(p.shape().size()));
    for (int d : p.shape()) w.u64(static_cast<uint64_t>(d));
    for (double v : p.values()) w.f64(v);
  }
  atomic_write_file(path, w.str());
}

inline TrackModel load_checkpoint(const std::filesystem::path& path) {
  std::string blob = read_file(path);
  detail::LeReader r(blob, path.string());
  if (r.bytes(4) != "SIMT") {
    throw std::runtime_error("not a checkpoint (bad magic): " + path.string());
  }
  uint32_t version = r.u32();
  if (version != detail::kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             " in " + path.string());
  }
  ModelConfig cfg = detail::read_config(r);
  TrackModel model = TrackModel::init(cfg);
  auto params = model.params();
  uint64_t count = r.u64();
  if (count != params.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(count) + " tensors, model " +
                             std::to_string(params.size()) + ": " + path.string());
  }
  for (auto& [name, p] : params) {
    uint32_t name_len = r.u32();
    std::string got_name = r.bytes(name_len);
    if (got_name != name) {
      throw std::runtime_error("checkpoint tensor order mismatch: expected \"" + name +
                               "\", found \"" + got_name + "\"");
    }
    uint32_t rank = r.u32();
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(r.u64());
    if (shape != p.shape()) {
      throw std::runtime_error("checkpoint tensor \"" + name + "\" has shape " +
                               shape_str(shape) + ", model expects " + shape_str(p.shape()));
    }
    auto& dst = p.leaf_values();
    for (auto& v : dst) v = r.f64();
  }
  if (!r.done()) {
    throw std::runtime_error("trailing bytes after checkpoint payload: " + path.string());
  }
  return model;
}

}  // namespace simtrack
