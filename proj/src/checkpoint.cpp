#include "aren/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <memory>

#include "aren/errors.hpp"

namespace aren {

namespace {

constexpr char kMagic[8] = {'A', 'R', 'E', 'N', 'C', 'K', 'P', 'T'};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

class Writer {
 public:
  Writer(std::FILE* f, std::string path) : f_(f), path_(std::move(path)) {}

  void bytes(const void* p, size_t n) {
    if (std::fwrite(p, 1, n, f_) != n) throw IoError("checkpoint: short write to " + path_);
  }
  void u32(uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    bytes(b, 4);
  }
  void u8(uint8_t v) { bytes(&v, 1); }
  void f32s(const std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(v.data(), v.size() * 4);
    } else {
      for (float x : v) u32(std::bit_cast<uint32_t>(x));
    }
  }

 private:
  std::FILE* f_;
  std::string path_;
};

class Reader {
 public:
  Reader(std::FILE* f, std::string path) : f_(f), path_(std::move(path)) {}

  void set_context(std::string ctx) { ctx_ = std::move(ctx); }

  void bytes(void* p, size_t n) {
    if (std::fread(p, 1, n, f_) != n)
      throw IoError("checkpoint: " + path_ + " truncated at offset " + std::to_string(offset_) +
                    (ctx_.empty() ? "" : " while reading " + ctx_));
    offset_ += n;
  }
  uint32_t u32() {
    uint8_t b[4];
    bytes(b, 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }
  uint8_t u8() {
    uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::string str(uint32_t len) {
    std::string s(len, '\0');
    if (len) bytes(s.data(), len);
    return s;
  }
  void f32s(std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(v.data(), v.size() * 4);
    } else {
      for (float& x : v) x = std::bit_cast<float>(u32());
    }
  }
  size_t offset() const { return offset_; }

 private:
  std::FILE* f_;
  std::string path_;
  std::string ctx_;
  size_t offset_ = 0;
};

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

int64_t Checkpoint::total_elements() const {
  int64_t n = 0;
  for (const auto& e : entries) n += static_cast<int64_t>(e.data.size());
  return n;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("checkpoint: cannot write " + path);
  Writer w(f.get(), path);
  w.bytes(kMagic, 8);
  w.u32(ckpt.version);
  w.u32(static_cast<uint32_t>(ckpt.config_text.size()));
  w.bytes(ckpt.config_text.data(), ckpt.config_text.size());
  w.u32(static_cast<uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    if (e.name.empty()) throw ContractError("checkpoint: entry with empty name");
    if (e.dims.empty() || e.dims.size() > 255)
      throw ContractError("checkpoint: bad rank for entry '" + e.name + "'");
    int64_t numel = 1;
    for (int64_t d : e.dims) {
      if (d < 1) throw ContractError("checkpoint: bad dim in entry '" + e.name + "'");
      numel *= d;
    }
    if (numel != static_cast<int64_t>(e.data.size()))
      throw ContractError("checkpoint: dims do not match payload in entry '" + e.name + "'");
    w.u32(static_cast<uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.u8(kDtypeF32);
    w.u8(static_cast<uint8_t>(e.dims.size()));
    for (int64_t d : e.dims) w.u32(static_cast<uint32_t>(d));
    w.f32s(e.data);
  }
  if (std::fflush(f.get()) != 0) throw IoError("checkpoint: short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("checkpoint: cannot open " + path);
  Reader r(f.get(), path);

  char magic[8];
  r.set_context("magic");
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("checkpoint: bad magic in " + path + " at offset 0");

  Checkpoint ckpt;
  r.set_context("version");
  ckpt.version = r.u32();
  if (ckpt.version != kCheckpointVersion)
    throw IoError("checkpoint: " + path + " has format version " + std::to_string(ckpt.version) +
                  ", expected " + std::to_string(kCheckpointVersion) + " (offset 8)");

  r.set_context("config block");
  const uint32_t cfg_len = r.u32();
  ckpt.config_text = r.str(cfg_len);

  r.set_context("entry count");
  const uint32_t count = r.u32();
  ckpt.entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    r.set_context("entry " + std::to_string(i) + " header");
    CheckpointEntry e;
    const uint32_t name_len = r.u32();
    e.name = r.str(name_len);
    r.set_context("entry '" + e.name + "'");
    const uint8_t dtype = r.u8();
    if (dtype != kDtypeF32)
      throw IoError("checkpoint: unknown dtype " + std::to_string(dtype) + " in entry '" + e.name +
                    "' at offset " + std::to_string(r.offset() - 1));
    const uint8_t rank = r.u8();
    if (rank == 0)
      throw IoError("checkpoint: zero rank in entry '" + e.name + "' at offset " +
                    std::to_string(r.offset() - 1));
    int64_t numel = 1;
    for (uint8_t d = 0; d < rank; ++d) {
      const uint32_t dim = r.u32();
      if (dim == 0)
        throw IoError("checkpoint: zero dim in entry '" + e.name + "' at offset " +
                      std::to_string(r.offset() - 4));
      e.dims.push_back(static_cast<int64_t>(dim));
      numel *= dim;
    }
    e.data.resize(static_cast<size_t>(numel));
    r.f32s(e.data);
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

void append_store(Checkpoint& ckpt, const ParamStore<float>& store) {
  for (const auto& p : store.entries()) {
    CheckpointEntry e;
    e.name = p.name;
    const Shape& s = p.tensor.shape();
    for (int64_t d = 0; d < s.rank(); ++d) e.dims.push_back(s[d]);
    e.data = p.tensor.vec();
    ckpt.entries.push_back(std::move(e));
  }
}

void restore_store(const Checkpoint& ckpt, ParamStore<float>& store) {
  for (auto& p : store.entries()) {
    const CheckpointEntry* e = ckpt.find(p.name);
    if (!e) throw IoError("checkpoint: missing parameter '" + p.name + "'");
    const Shape& s = p.tensor.shape();
    bool same = s.rank() == static_cast<int64_t>(e->dims.size());
    for (int64_t d = 0; same && d < s.rank(); ++d) same = s[d] == e->dims[static_cast<size_t>(d)];
    if (!same)
      throw IoError("checkpoint: shape mismatch for '" + p.name + "', store wants " + s.str());
    std::copy(e->data.begin(), e->data.end(), p.tensor.data());
  }
}

void append_adam(Checkpoint& ckpt, const std::string& tag, Adam<float>& opt,
                 const ParamStore<float>& store) {
  for (const auto& p : store.entries()) {
    if (!p.trainable) continue;
    auto* mv = opt.moments_for(p.name);
    if (!mv) continue;  // parameter not yet stepped
    CheckpointEntry m, v;
    m.name = tag + "." + p.name + ".m";
    v.name = tag + "." + p.name + ".v";
    m.dims = {static_cast<int64_t>(mv->first.size())};
    v.dims = {static_cast<int64_t>(mv->second.size())};
    m.data = mv->first;
    v.data = mv->second;
    ckpt.entries.push_back(std::move(m));
    ckpt.entries.push_back(std::move(v));
  }
}

void restore_adam(const Checkpoint& ckpt, const std::string& tag, Adam<float>& opt,
                  const ParamStore<float>& store) {
  for (const auto& p : store.entries()) {
    if (!p.trainable) continue;
    const CheckpointEntry* m = ckpt.find(tag + "." + p.name + ".m");
    const CheckpointEntry* v = ckpt.find(tag + "." + p.name + ".v");
    if (!m && !v) continue;
    if (!m || !v)
      throw IoError("checkpoint: incomplete optimizer moments for '" + p.name + "'");
    opt.restore_moments(p.name, m->data, v->data);
  }
}

}  // namespace aren
