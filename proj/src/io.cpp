#include "aco/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "aco/common.hpp"

namespace aco::io {

namespace {

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), f_(path, std::ios::binary) {
    if (!f_) fail("io", "cannot open " + path + " for writing");
  }
  void bytes(const void* p, size_t n) { f_.write(static_cast<const char*>(p), long(n)); }
  void u8(uint8_t v) { bytes(&v, 1); }
  void u16(uint16_t v) { bytes(&v, 2); }
  void u32(uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  void close() {
    f_.close();
    if (!f_) fail("io", "write failed for " + path_);
  }

 private:
  std::string path_;
  std::ofstream f_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("missing_input", "cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    buf_ = ss.str();
  }
  void bytes(void* p, size_t n) {
    if (pos_ + n > buf_.size())
      fail("truncated", "unexpected end of file at offset " + std::to_string(pos_));
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  uint8_t u8() { uint8_t v; bytes(&v, 1); return v; }
  uint16_t u16() { uint16_t v; bytes(&v, 2); return v; }
  uint32_t u32() { uint32_t v; bytes(&v, 4); return v; }
  float f32() { float v; bytes(&v, 4); return v; }
  void expect_magic(const char* magic) {
    char m[4];
    bytes(m, 4);
    if (std::memcmp(m, magic, 4) != 0)
      fail("bad_magic", std::string("expected magic '") + magic + "'");
  }
  void expect_version() {
    uint32_t v = u32();
    if (v != kFormatVersion)
      fail("bad_version", "unsupported format version " + std::to_string(v));
  }
  size_t remaining() const { return buf_.size() - pos_; }
  void expect_eof() {
    if (remaining() != 0)
      fail("bad_count", std::to_string(remaining()) + " trailing bytes");
  }

 private:
  std::string buf_;
  size_t pos_ = 0;
};

// guards against absurd counts in corrupted headers before allocating
constexpr uint64_t kMaxPayload = 1ULL << 33;

}  // namespace

void write_frame_pack(const std::string& path, const std::vector<Frame>& frames) {
  if (frames.empty()) fail("bad_arg", "refusing to write empty frame pack");
  Writer w(path);
  w.bytes("ACOF", 4);
  w.u32(kFormatVersion);
  w.u32(uint32_t(frames.size()));
  w.u16(frames[0].height);
  w.u16(frames[0].width);
  w.u16(3);
  for (const Frame& fr : frames) {
    if (fr.height != frames[0].height || fr.width != frames[0].width)
      fail("bad_arg", "mixed frame dimensions in pack");
    w.u32(fr.episode_id);
    w.u32(fr.time_index);
    w.bytes(fr.pixels.data(), fr.pixels.size() * 4);
  }
  w.close();
}

std::vector<Frame> read_frame_pack(const std::string& path) {
  Reader r(path);
  r.expect_magic("ACOF");
  r.expect_version();
  uint32_t count = r.u32();
  uint16_t h = r.u16(), w = r.u16(), c = r.u16();
  if (count == 0 || h == 0 || w == 0 || c != 3)
    fail("bad_count", "bad frame pack header");
  uint64_t per = uint64_t(h) * w * c * 4 + 8;
  if (uint64_t(count) * per != r.remaining())
    fail("bad_count", "frame count does not match payload length");
  std::vector<Frame> frames(count);
  for (Frame& fr : frames) {
    fr.height = h;
    fr.width = w;
    fr.episode_id = r.u32();
    fr.time_index = r.u32();
    fr.pixels.resize(size_t(h) * w * c);
    r.bytes(fr.pixels.data(), fr.pixels.size() * 4);
  }
  r.expect_eof();
  return frames;
}

void write_label_file(const std::string& path, const std::vector<ActionLabel>& labels) {
  if (labels.empty()) fail("bad_arg", "refusing to write empty label file");
  Writer w(path);
  w.bytes("ACOL", 4);
  w.u32(kFormatVersion);
  w.u32(uint32_t(labels.size()));
  for (const ActionLabel& l : labels) {
    w.u32(l.episode_id);
    w.u32(l.time_index);
    w.f32(l.steering);
    w.u8(uint8_t(l.source));
  }
  w.close();
}

std::vector<ActionLabel> read_label_file(const std::string& path) {
  Reader r(path);
  r.expect_magic("ACOL");
  r.expect_version();
  uint32_t count = r.u32();
  if (count == 0) fail("bad_count", "empty label file");
  if (uint64_t(count) * 13 != r.remaining())
    fail("bad_count", "label count does not match payload length");
  std::vector<ActionLabel> labels(count);
  for (ActionLabel& l : labels) {
    l.episode_id = r.u32();
    l.time_index = r.u32();
    l.steering = r.f32();
    uint8_t s = r.u8();
    if (s > 1) fail("bad_count", "bad label source byte");
    l.source = LabelSource(s);
  }
  r.expect_eof();
  return labels;
}

void Checkpoint::add(const std::string& name, const num::Tensor& t) {
  if (find(name)) fail("bad_arg", "duplicate checkpoint tensor " + name);
  CheckpointTensor ct;
  ct.name = name;
  ct.dims = t.shape;
  ct.data.reserve(t.data.size());
  for (double v : t.data) ct.data.push_back(float(v));
  tensors.push_back(std::move(ct));
}

void Checkpoint::add_param_set(const std::string& prefix, const num::ParamSet& ps) {
  for (size_t i = 0; i < ps.names.size(); ++i)
    add(prefix + ps.names[i], ps.values[i]);
}

void Checkpoint::set_provenance(const std::string& mode, uint64_t config_digest,
                                uint64_t seed) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "mode=%s digest=%016llx seed=%llu", mode.c_str(),
                (unsigned long long)config_digest, (unsigned long long)seed);
  std::string s = buf;
  CheckpointTensor ct;
  ct.name = "__meta__";
  ct.dims = {int(s.size())};
  for (char c : s) ct.data.push_back(float((unsigned char)c));
  tensors.push_back(std::move(ct));
}

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const CheckpointTensor& Checkpoint::require(const std::string& name) const {
  const CheckpointTensor* t = find(name);
  if (!t) fail("bad_checkpoint", "missing tensor " + name);
  return *t;
}

num::Tensor Checkpoint::tensor(const std::string& name) const {
  const CheckpointTensor& ct = require(name);
  num::Tensor t = num::Tensor::zeros(ct.dims);
  for (size_t i = 0; i < ct.data.size(); ++i) t.data[i] = double(ct.data[i]);
  return t;
}

num::ParamSet Checkpoint::param_set(const std::string& prefix) const {
  num::ParamSet ps;
  for (const auto& t : tensors)
    if (t.name.rfind(prefix, 0) == 0) {
      num::Tensor v = num::Tensor::zeros(t.dims);
      for (size_t i = 0; i < t.data.size(); ++i) v.data[i] = double(t.data[i]);
      ps.add(t.name.substr(prefix.size()), std::move(v));
    }
  if (ps.size() == 0) fail("bad_checkpoint", "no tensors with prefix " + prefix);
  return ps;
}

std::string Checkpoint::provenance() const {
  const CheckpointTensor* t = find("__meta__");
  if (!t) return "";
  std::string s;
  for (float v : t->data) s.push_back(char((unsigned char)v));
  return s;
}

std::string Checkpoint::provenance_field(const std::string& key) const {
  std::string p = provenance();
  std::istringstream is(p);
  std::string tok;
  while (is >> tok) {
    auto eq = tok.find('=');
    if (eq != std::string::npos && tok.substr(0, eq) == key)
      return tok.substr(eq + 1);
  }
  return "";
}

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  Writer w(path);
  w.bytes("ACOW", 4);
  w.u32(kFormatVersion);
  w.u32(uint32_t(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    if (t.name.size() > 0xffff) fail("bad_arg", "tensor name too long");
    w.u16(uint16_t(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u8(uint8_t(t.dims.size()));
    for (int d : t.dims) w.u32(uint32_t(d));
    w.bytes(t.data.data(), t.data.size() * 4);
  }
  w.close();
}

Checkpoint read_checkpoint(const std::string& path) {
  Reader r(path);
  r.expect_magic("ACOW");
  r.expect_version();
  uint32_t count = r.u32();
  Checkpoint ck;
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    uint16_t nlen = r.u16();
    t.name.resize(nlen);
    r.bytes(t.name.data(), nlen);
    for (const auto& prev : ck.tensors)
      if (prev.name == t.name) fail("bad_count", "duplicate tensor name " + t.name);
    uint8_t rank = r.u8();
    uint64_t numel = 1;
    for (int d = 0; d < rank; ++d) {
      uint32_t dim = r.u32();
      if (dim == 0) fail("bad_count", "zero dimension in tensor " + t.name);
      t.dims.push_back(int(dim));
      numel *= dim;
      if (numel * 4 > kMaxPayload) fail("bad_count", "tensor too large: " + t.name);
    }
    if (rank == 0) numel = 1;
    if (numel * 4 > r.remaining())
      fail("truncated", "tensor payload exceeds file for " + t.name);
    t.data.resize(size_t(numel));
    r.bytes(t.data.data(), size_t(numel) * 4);
    ck.tensors.push_back(std::move(t));
  }
  r.expect_eof();
  return ck;
}

MetricsWriter::MetricsWriter(const std::string& path) : path_(path) {
  std::ofstream f(path_, std::ios::binary | std::ios::trunc);
  if (!f) fail("io", "cannot open metrics stream " + path_);
}

void MetricsWriter::record(int64_t step, const std::string& key, double value) {
  std::ofstream f(path_, std::ios::binary | std::ios::app);
  char buf[160];
  std::snprintf(buf, sizeof buf, "step=%lld key=%s value=%.17g\n",
                (long long)step, key.c_str(), value);
  f << buf;
  if (!f) fail("io", "metrics write failed for " + path_);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) fail("io", "cannot write " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("missing_input", "cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_digest(const std::string& dir, uint64_t digest) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx\n", (unsigned long long)digest);
  write_text_file(dir + "/config.digest", buf);
}

void check_digest(const std::string& dir, uint64_t digest) {
  std::string text = read_text_file(dir + "/config.digest");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)digest);
  if (text.substr(0, 16) != buf)
    fail("config_mismatch", "config digest in " + dir +
                                " does not match current config");
}

}  // namespace aco::io
