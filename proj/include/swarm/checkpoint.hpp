// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint container (little-endian):
//
//   "SWRM" | u32 version | u32 kind | config: u32 layers, d_model, d_ff, heads, max_len, vocab
//   kind == adapter: u64 base_hash | f64 alpha | u32 bottleneck | f64 dropout
//   u32 array_count, then per array: u32 name_len | name | u32 rows | u32 cols | f64[rows*cols]
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "swarm/scorer.hpp"

namespace swarm {

inline constexpr char kCheckpointMagic[4] = {'S', 'W', 'R', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint32_t { model = 0, adapter = 1 };

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    out_.append(c, n);
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void matrix(std::string_view name, const Matrix& m) {
    str(name);
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    bytes(m.data().data(), m.size() * sizeof(double));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  void bytes(void* p, std::size_t n) {
    if (pos_ + n > data_.size()) fail(ErrorKind::format, "checkpoint truncated");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = u32();
    if (pos_ + n > data_.size()) fail(ErrorKind::format, "checkpoint truncated");
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline void write_config(ByteWriter& w, const ModelConfig& c) {
  for (auto v : {c.layers, c.d_model, c.d_ff, c.heads, c.max_len, c.vocab}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
}

inline ModelConfig read_config(ByteReader& r) {
  ModelConfig c;
  c.layers = r.u32();
  c.d_model = r.u32();
  c.d_ff = r.u32();
  c.heads = r.u32();
  c.max_len = r.u32();
  c.vocab = r.u32();
  return c;
}

inline CheckpointKind read_header(ByteReader& r) {
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) fail(ErrorKind::format, "checkpoint: bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorKind::format, "checkpoint: unsupported version " + std::to_string(version));
  }
  const auto kind = r.u32();
  if (kind > 1) fail(ErrorKind::format, "checkpoint: unknown kind " + std::to_string(kind));
  return static_cast<CheckpointKind>(kind);
}

inline std::map<std::string, Matrix> read_arrays(ByteReader& r) {
  std::map<std::string, Matrix> arrays;
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.str();
    const auto rows = r.u32();
    const auto cols = r.u32();
    if (static_cast<std::uint64_t>(rows) * cols * sizeof(double) > r.remaining()) {
      fail(ErrorKind::format, "checkpoint truncated");
    }
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    r.bytes(data.data(), data.size() * sizeof(double));
    arrays.emplace(std::move(name), Matrix(rows, cols, std::move(data)));
  }
  if (!r.at_end()) fail(ErrorKind::format, "checkpoint: trailing bytes");
  return arrays;
}

}  // namespace detail

/// FNV-1a over the serialized bytes; identifies the base an adapter extends.
inline std::uint64_t checkpoint_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Serializes the base weights only, ignoring any attached adapters.
inline std::string serialize_base(const ScorerModel& model) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(CheckpointKind::model));
  detail::write_config(w, model.config());
  std::uint32_t count = 0;
  model.for_each_parameter([&](const Parameter&) { ++count; });
  w.u32(count);
  model.for_each_parameter([&](const Parameter& p) { w.matrix(p.name, p.value); });
  return w.take();
}

inline std::string save_checkpoint(const ScorerModel& model) {
  if (model.has_adapters()) {
    fail(ErrorKind::state, "save_checkpoint: merge or detach adapters before saving the base model");
  }
  return serialize_base(model);
}

inline ScorerModel load_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (detail::read_header(r) != CheckpointKind::model) {
    fail(ErrorKind::format, "checkpoint: expected a model checkpoint, found an adapter");
  }
  const auto config = detail::read_config(r);
  config.validate();
  auto arrays = detail::read_arrays(r);
  ScorerModel model = ScorerModel::init(config, 0);
  std::size_t used = 0;
  model.for_each_parameter([&](Parameter& p) {
    const auto it = arrays.find(p.name);
    if (it == arrays.end()) fail(ErrorKind::format, "checkpoint: missing array " + p.name);
    if (!it->second.same_shape(p.value)) {
      fail(ErrorKind::format, "checkpoint: shape mismatch for " + p.name + ": " +
                                  it->second.shape() + " vs config " + p.value.shape());
    }
    p.value = std::move(it->second);
    p.zero_grad();
    ++used;
  });
  if (used != arrays.size()) fail(ErrorKind::format, "checkpoint: unexpected extra arrays");
  return model;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

}  // namespace swarm
