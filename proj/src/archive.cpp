// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include "qvdit/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "qvdit/errors.hpp"

namespace qvdit {

namespace {

constexpr char kMagic[4] = {'Q', 'V', 'D', 'A'};
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;
// Guards against absurd lengths in corrupt files before allocating.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { put(v, 4); }
  void i32(std::int32_t v) { put(static_cast<std::uint32_t>(v), 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v), 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void vec(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string& bytes() { return out_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : in_(bytes) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(get(4))); }
  std::uint64_t u64() { return get(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(get(8)); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::size_t count(const char* what) {
    const std::uint64_t n = u64();
    if (n > kMaxElements) throw ArchiveError(fmt::format("archive: implausible {} count {}", what, n));
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<double> vec() {
    const std::size_t n = count("vector");
    need(n * 8);
    std::vector<double> v(n);
    for (double& x : v) x = f64();
    return v;
  }
  void magic() {
    need(4);
    if (std::memcmp(in_.data() + pos_, kMagic, 4) != 0) throw ArchiveError("archive: bad magic (not a qvdit archive)");
    pos_ += 4;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw ArchiveError("archive: truncated file");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{static_cast<unsigned char>(in_[pos_ + i])} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

void write_spec(Writer& w, const QuantSpec& s) {
  w.i32(s.bits);
  w.u8(static_cast<std::uint8_t>(s.granularity));
  w.u8(s.passthrough ? 1 : 0);
}

QuantSpec read_spec(Reader& r) {
  QuantSpec s;
  s.bits = r.i32();
  const std::uint8_t g = r.u8();
  if (g > static_cast<std::uint8_t>(Granularity::per_token)) {
    throw ArchiveError(fmt::format("archive: unknown granularity {}", g));
  }
  s.granularity = static_cast<Granularity>(g);
  s.passthrough = r.u8() != 0;
  return s;
}

}  // namespace

std::string encode_archive(const ToyDiT& model, const QuantState& state) {
  const auto layers = model.linear_layers();
  if (state.size() != layers.size()) {
    throw std::invalid_argument(fmt::format("archive: state covers {} layers, model has {}", state.size(),
                                            layers.size()));
  }
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kArchiveVersion);
  const ToyDiTConfig& cfg = model.config();
  w.u64(cfg.layers);
  w.u64(cfg.hidden);
  w.u64(cfg.layout.spatial);
  w.u64(cfg.layout.frames);
  w.u8(static_cast<std::uint8_t>(cfg.kind));
  w.u64(cfg.seed);
  w.u64(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Linear& l = *layers[i];
    const LayerQuantState& st = state[i];
    w.str(l.name);
    w.u64(l.d_out());
    w.u64(l.d_in());
    for (double x : l.weight.data()) w.f64(x);
    for (double x : l.bias) w.f64(x);
    write_spec(w, st.weight_spec);
    write_spec(w, st.act_spec);
    w.u64(st.weight_params.size());
    for (const QuantParams& p : st.weight_params) {
      w.f64(p.scale);
      w.i64(p.zero_point);
      w.f64(p.lower);
      w.f64(p.upper);
      w.i32(p.bits);
    }
    w.u8(st.tqe_enabled ? 1 : 0);
    w.vec(st.tqe.alpha);
    w.vec(st.tqe.beta);
    w.vec(st.tqe.m);
  }
  const std::uint64_t sum = fnv1a(w.bytes());
  w.u64(sum);
  return std::move(w.bytes());
}

Archive decode_archive(std::string_view bytes) {
  Reader r(bytes);
  r.magic();
  const std::uint32_t version = r.u32();
  if (version != kArchiveVersion) {
    throw ArchiveError(fmt::format("archive: format version {} is not supported (this build reads {})", version,
                                   kArchiveVersion));
  }
  if (bytes.size() < 8) throw ArchiveError("archive: truncated file");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  {
    Reader tail(bytes.substr(bytes.size() - 8));
    if (tail.u64() != fnv1a(body)) throw ArchiveError("archive: checksum mismatch (file is corrupt)");
  }
  Reader b(body);
  b.magic();
  b.u32();

  ToyDiTConfig cfg;
  cfg.layers = b.count("layer");
  cfg.hidden = b.count("hidden");
  cfg.layout.spatial = b.count("spatial");
  cfg.layout.frames = b.count("frame");
  const std::uint8_t kind = b.u8();
  if (kind > static_cast<std::uint8_t>(BlockKind::attention_mlp)) {
    throw ArchiveError(fmt::format("archive: unknown block kind {}", kind));
  }
  cfg.kind = static_cast<BlockKind>(kind);
  cfg.seed = b.u64();
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ArchiveError(fmt::format("archive: invalid model header: {}", e.what()));
  }

  // Rebuild the skeleton for names and shapes, then overwrite its parameters.
  ToyDiT model = build_model(cfg);
  auto layers = model.mutable_linear_layers();
  const std::size_t count = b.count("layer");
  if (count != layers.size()) {
    throw ArchiveError(fmt::format("archive: {} layers stored, model header implies {}", count, layers.size()));
  }
  QuantState state(count);
  for (std::size_t i = 0; i < count; ++i) {
    Linear& l = *layers[i];
    const std::string name = b.str();
    if (name != l.name) throw ArchiveError(fmt::format("archive: layer {} is '{}', expected '{}'", i, name, l.name));
    const std::size_t d_out = b.count("d_out");
    const std::size_t d_in = b.count("d_in");
    if (d_out != l.d_out() || d_in != l.d_in()) {
      throw ArchiveError(fmt::format("archive: layer '{}' stored as {}x{}, expected {}x{}", name, d_out, d_in,
                                     l.d_out(), l.d_in()));
    }
    for (double& x : l.weight.data()) x = b.f64();
    for (double& x : l.bias) x = b.f64();
    LayerQuantState& st = state[i];
    st.weight_spec = read_spec(b);
    st.act_spec = read_spec(b);
    const std::size_t np = b.count("parameter");
    st.weight_params.resize(np);
    for (QuantParams& p : st.weight_params) {
      p.scale = b.f64();
      p.zero_point = b.i64();
      p.lower = b.f64();
      p.upper = b.f64();
      p.bits = b.i32();
    }
    st.tqe_enabled = b.u8() != 0;
    st.tqe.alpha = b.vec();
    st.tqe.beta = b.vec();
    st.tqe.m = b.vec();
  }
  if (!b.done()) throw ArchiveError("archive: trailing bytes after last layer");
  return {std::move(model), std::move(state)};
}

void save_archive(const std::filesystem::path& path, const ToyDiT& model, const QuantState& state) {
  const std::string bytes = encode_archive(model, state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArchiveError(fmt::format("cannot write archive '{}'", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArchiveError(fmt::format("failed writing archive '{}'", path.string()));
}

Archive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError(fmt::format("cannot read archive '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return decode_archive(buf.str());
  } catch (const ArchiveError& e) {
    throw ArchiveError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void check_archive_matches(const Archive& archive, const ToyDiTConfig& cfg) {
  const ToyDiTConfig& got = archive.model.config();
  if (got.layout != cfg.layout) {
    throw ArchiveError(fmt::format("archive frame layout {}x{} differs from config {}x{}", got.layout.frames,
                                   got.layout.spatial, cfg.layout.frames, cfg.layout.spatial));
  }
  const ToyDiT expected = build_model(cfg);
  const auto want = expected.linear_layers();
  const auto have = archive.model.linear_layers();
  for (std::size_t i = 0; i < std::max(want.size(), have.size()); ++i) {
    if (i >= have.size()) throw ArchiveError(fmt::format("layer '{}': missing from archive", want[i]->name));
    if (i >= want.size()) {
      throw ArchiveError(fmt::format("layer '{}': not part of the configured model", have[i]->name));
    }
    const Linear& a = *have[i];
    const Linear& b = *want[i];
    if (a.name != b.name || a.d_out() != b.d_out() || a.d_in() != b.d_in()) {
      throw ArchiveError(fmt::format("layer '{}': archive has {}x{}, config expects '{}' {}x{}", a.name, a.d_out(),
                                     a.d_in(), b.name, b.d_out(), b.d_in()));
    }
  }
}

}  // namespace qvdit
