#include "dsfpo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dsfpo/errors.hpp"

namespace dsfpo {

namespace {

constexpr char kMagic[4] = {'D', 'R', 'B', 'L'};

// Explicit little-endian encoding so checkpoint bytes do not depend on the
// host (doubles go through their IEEE-754 bit pattern).
class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u8(uint8_t v) { out_.put(char(v)); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.put(char((v >> (8 * i)) & 0xff));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.put(char((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), long(s.size()));
  }
  void tensor(const Tensor& t) {
    u32(uint32_t(t.rank()));
    for (auto e : t.shape()) u64(e);
    for (std::size_t i = 0; i < t.size(); ++i) f64(t[i]);
  }
  void named_tensors(const std::vector<std::pair<std::string, Tensor>>& v) {
    u64(v.size());
    for (const auto& [name, t] : v) {
      str(name);
      tensor(t);
    }
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  uint8_t u8() { return uint8_t(get()); }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(get()) << (8 * i);
    return v;
  }
  uint64_t u64() {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(get()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const uint64_t n = u64();
    if (n > (1ull << 32)) fail("string length");
    std::string s(n, '\0');
    in_.read(s.data(), long(n));
    if (!in_) fail("string body");
    return s;
  }
  Tensor tensor() {
    const uint32_t rank = u32();
    if (rank > 4) fail("tensor rank");
    std::vector<std::size_t> shape;
    std::size_t count = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      shape.push_back(std::size_t(u64()));
      count *= shape.back();
      if (count > (1ull << 32)) fail("tensor extent");
    }
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = f64();
    return t;
  }
  std::vector<std::pair<std::string, Tensor>> named_tensors() {
    const uint64_t n = u64();
    if (n > (1ull << 20)) fail("tensor count");
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(n);
    for (uint64_t i = 0; i < n; ++i) {
      std::string name = str();
      out.emplace_back(std::move(name), tensor());
    }
    return out;
  }
  [[noreturn]] void fail(const char* what) {
    throw CheckpointError(CheckpointErrorKind::corrupt,
                          std::string("checkpoint: corrupt or truncated (") + what + ")");
  }

 private:
  int get() {
    const int c = in_.get();
    if (c == EOF) fail("unexpected end of file");
    return c;
  }
  std::istream& in_;
};

void write_adam(Writer& w, const Checkpoint::AdamBlob& a) {
  w.u64(uint64_t(a.step));
  w.named_tensors(a.m);
  w.named_tensors(a.v);
}

Checkpoint::AdamBlob read_adam(Reader& r) {
  Checkpoint::AdamBlob a;
  a.step = long(r.u64());
  a.m = r.named_tensors();
  a.v = r.named_tensors();
  return a;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "checkpoint: cannot write " + path);
  Writer w(out);
  out.write(kMagic, 4);
  w.u32(Checkpoint::kVersion);
  w.str(ckpt.config_text);
  w.u64(ckpt.config_hash);
  w.u64(ckpt.iteration);
  w.named_tensors(ckpt.params);
  write_adam(w, ckpt.rl_opt);
  write_adam(w, ckpt.est_opt);
  w.u32(uint32_t(ckpt.grid_cells_per_axis));
  w.u64(ckpt.grid_cmd_weight.size());
  for (uint8_t b : ckpt.grid_cmd_weight) w.u8(b);
  w.u64(ckpt.grid_level_weight.size());
  for (uint8_t b : ckpt.grid_level_weight) w.u8(b);
  w.u64(ckpt.rng_streams.size());
  for (const auto& [name, state] : ckpt.rng_streams) {
    w.str(name);
    for (uint64_t s : state) w.u64(s);
  }
  w.u64(ckpt.env_blobs.size());
  for (const auto& blob : ckpt.env_blobs) {
    w.u64(blob.size());
    for (double v : blob) w.f64(v);
  }
  out.flush();
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "checkpoint: write failed " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::io, "checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError(CheckpointErrorKind::corrupt, "checkpoint: bad magic in " + path);
  Reader r(in);
  const uint32_t version = r.u32();
  if (version != Checkpoint::kVersion)
    throw CheckpointError(CheckpointErrorKind::version_mismatch,
                          "checkpoint: version " + std::to_string(version) + ", expected " +
                              std::to_string(Checkpoint::kVersion));
  Checkpoint c;
  c.config_text = r.str();
  c.config_hash = r.u64();
  c.iteration = r.u64();
  c.params = r.named_tensors();
  c.rl_opt = read_adam(r);
  c.est_opt = read_adam(r);
  c.grid_cells_per_axis = int(r.u32());
  const uint64_t ncmd = r.u64();
  if (ncmd > (1ull << 24)) r.fail("grid size");
  c.grid_cmd_weight.resize(ncmd);
  for (auto& b : c.grid_cmd_weight) b = r.u8();
  const uint64_t nlvl = r.u64();
  if (nlvl > (1ull << 16)) r.fail("level count");
  c.grid_level_weight.resize(nlvl);
  for (auto& b : c.grid_level_weight) b = r.u8();
  const uint64_t nstreams = r.u64();
  if (nstreams > (1ull << 20)) r.fail("stream count");
  for (uint64_t i = 0; i < nstreams; ++i) {
    std::string name = r.str();
    std::array<uint64_t, 4> state{};
    for (auto& s : state) s = r.u64();
    c.rng_streams.emplace_back(std::move(name), state);
  }
  const uint64_t nenvs = r.u64();
  if (nenvs > (1ull << 20)) r.fail("env count");
  c.env_blobs.resize(nenvs);
  for (auto& blob : c.env_blobs) {
    const uint64_t n = r.u64();
    if (n > (1ull << 24)) r.fail("env blob size");
    blob.resize(n);
    for (auto& v : blob) v = r.f64();
  }
  return c;
}

}  // namespace dsfpo
