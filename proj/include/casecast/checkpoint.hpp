#pragma once

// Model checkpoint container.
//
// Layout (all integers little-endian):
//   magic   "CCNET001" (8 bytes)
//   meta    u32 count, then per entry: string key, string value
//   tensors u32 count, then per entry: string name, u64 rows, u64 cols
//           (cols == 0 marks a vector), then rows*max(cols,1) doubles as
//           raw IEEE-754 little-endian bits
// Strings are u32 length + bytes. Doubles round-trip bit-exactly.
//
// A checkpoint carries the network, the scaler it was trained with, the
// window length and enough labels (mode, variant, country) to re-attach it
// to a panel at prediction time.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "casecast/errors.hpp"
#include "casecast/nn.hpp"
#include "casecast/prep.hpp"

namespace casecast {

struct Checkpoint {
  StackedNet net;
  ScalerParams scaler;
  std::size_t window = 10;
  std::string mode;     // "univariate" or "multivariate"
  std::string variant;
  std::string country;  // univariate only, else empty
};

namespace detail {

inline constexpr char kCheckpointMagic[9] = "CCNET001";

struct ByteWriter {
  std::string out;
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out.append(s);
  }
  void doubles(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &p[i], 8);
      u64(bits);
    }
  }
};

struct ByteReader {
  const std::string& in;
  std::size_t pos = 0;
  explicit ByteReader(const std::string& s) : in(s) {}
  void need(std::size_t n) const {
    if (pos + n > in.size()) throw FormatError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = in.substr(pos, n);
    pos += n;
    return s;
  }
  void doubles(double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t bits = u64();
      std::memcpy(&p[i], &bits, 8);
    }
  }
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& cp) {
  detail::ByteWriter w;
  w.out.append(detail::kCheckpointMagic, 8);

  std::map<std::string, std::string> meta;
  meta["kind"] = kind_name(cp.net.kind);
  meta["input_dim"] = std::to_string(cp.net.input_dim);
  meta["output_dim"] = std::to_string(cp.net.output_dim);
  meta["hidden"] = std::to_string(cp.net.hidden);
  meta["layer_count"] = std::to_string(cp.net.layer_count);
  meta["window"] = std::to_string(cp.window);
  meta["mode"] = cp.mode;
  meta["variant"] = cp.variant;
  meta["country"] = cp.country;
  w.u32(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }

  auto& net = const_cast<StackedNet&>(cp.net);
  auto spans = param_spans(net);
  const std::size_t features = cp.scaler.features();
  Vector degen(features);
  for (std::size_t i = 0; i < features; ++i) degen[i] = cp.scaler.degenerate[i] ? 1.0 : 0.0;

  struct Extra {
    const char* name;
    const Vector* v;
  };
  const Extra extras[] = {{"scaler.median", &cp.scaler.median},
                          {"scaler.q25", &cp.scaler.q25},
                          {"scaler.q75", &cp.scaler.q75},
                          {"scaler.iqr", &cp.scaler.iqr},
                          {"scaler.degenerate", &degen}};

  w.u32(static_cast<std::uint32_t>(spans.size() + std::size(extras)));
  for (const auto& s : spans) {
    w.str(s.name);
    w.u64(s.rows);
    w.u64(s.cols);
    w.doubles(s.data, s.size);
  }
  for (const auto& e : extras) {
    w.str(e.name);
    w.u64(e.v->size());
    w.u64(0);
    w.doubles(e.v->data(), e.v->size());
  }
  return std::move(w.out);
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  detail::ByteReader r(bytes);
  r.need(8);
  if (bytes.compare(0, 8, detail::kCheckpointMagic, 8) != 0) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  r.pos = 8;

  std::map<std::string, std::string> meta;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    meta[k] = r.str();
  }
  auto meta_num = [&](const char* key) -> std::size_t {
    auto it = meta.find(key);
    if (it == meta.end()) throw FormatError(std::string("checkpoint missing meta key ") + key);
    return static_cast<std::size_t>(std::stoull(it->second));
  };

  Checkpoint cp;
  cp.window = meta_num("window");
  cp.mode = meta["mode"];
  cp.variant = meta["variant"];
  cp.country = meta["country"];

  // Rebuild a zero net with the recorded shape, then fill tensors by name.
  Rng dummy(0);
  cp.net = init_net(kind_from_name(meta.at("kind")), meta_num("input_dim"),
                    meta_num("output_dim"), meta_num("hidden"), meta_num("layer_count"), dummy);
  auto spans = param_spans(cp.net);
  std::map<std::string, NamedSpan*> by_name;
  for (auto& s : spans) by_name[s.name] = &s;

  std::map<std::string, Vector> extras;
  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = r.str();
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    const std::size_t n = static_cast<std::size_t>(rows) * (cols ? cols : 1);
    auto it = by_name.find(name);
    if (it != by_name.end()) {
      if (it->second->size != n || it->second->rows != rows || it->second->cols != cols) {
        throw FormatError("checkpoint tensor " + name + " has unexpected shape");
      }
      r.doubles(it->second->data, n);
    } else {
      Vector v(n);
      r.doubles(v.data(), n);
      extras[name] = std::move(v);
    }
  }
  for (const char* key :
       {"scaler.median", "scaler.q25", "scaler.q75", "scaler.iqr", "scaler.degenerate"}) {
    if (!extras.count(key)) throw FormatError(std::string("checkpoint missing tensor ") + key);
  }
  cp.scaler.median = extras["scaler.median"];
  cp.scaler.q25 = extras["scaler.q25"];
  cp.scaler.q75 = extras["scaler.q75"];
  cp.scaler.iqr = extras["scaler.iqr"];
  const Vector& degen = extras["scaler.degenerate"];
  cp.scaler.degenerate.resize(degen.size());
  for (std::size_t i = 0; i < degen.size(); ++i) cp.scaler.degenerate[i] = degen[i] != 0.0;
  return cp;
}

}  // namespace casecast
