// Checkpoint layout (all integers and doubles little-endian):
//
//   "ITER" u32 version
//   encoder:   u64 tau, d_model, time_embed_dim, hidden_dim, channels; f64 time_scale, time_kernel_gain; u64 seed
//   params:    u32 count, then per tensor: u32 name_len, name, u64 rows, u64 cols, f64[rows*cols]
//   optimizer: f64 beta1, beta2, eps, lr; u64 t; m tensors; v tensors (same encoding as params)
//   stats:     u64 C; f64 mu[C]; f64 sigma[C]; f64 rho; u8 initialized
//   u64 step
//   rng:       u32 len, text
//   meta:      u32 len, text
//   u32 crc32 of everything above

#include <bit>
#include <boost/crc.hpp>
#include <fstream>
#include <iterator>

#include "itimer/errors.hpp"
#include "itimer/trainer.hpp"

namespace itimer {

namespace {

constexpr char kMagic[4] = {'I', 'T', 'E', 'R'};

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  void tensors(const std::map<std::string, Matrix>& ts) {
    u32(static_cast<std::uint32_t>(ts.size()));
    for (const auto& [name, m] : ts) {
      str(name);
      u64(m.rows());
      u64(m.cols());
      for (double v : m.data()) f64(v);
    }
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}
  void need(std::size_t n) {
    if (pos_ + n > b_.size()) throw IntegrityError("checkpoint truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(b_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(b_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::map<std::string, Matrix> tensors() {
    std::map<std::string, Matrix> out;
    const std::uint32_t n = u32();
    for (std::uint32_t k = 0; k < n; ++k) {
      std::string name = str();
      const std::uint64_t r = u64(), c = u64();
      if (c != 0 && r > (b_.size() - pos_) / 8 / c) throw IntegrityError("checkpoint tensor size");
      Matrix m(r, c);
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = f64();
      out.emplace(std::move(name), std::move(m));
    }
    return out;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view b_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32(std::string_view b) {
  boost::crc_32_type crc;
  crc.process_bytes(b.data(), b.size());
  return crc.checksum();
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const ModelState& s = ckpt.state;
  Writer w;
  w.raw(kMagic, 4);
  w.u32(ckpt.version);
  w.u64(s.encoder.tau);
  w.u64(s.encoder.d_model);
  w.u64(s.encoder.time_embed_dim);
  w.u64(s.encoder.hidden_dim);
  w.u64(s.encoder.channels);
  w.f64(s.encoder.time_scale);
  w.f64(s.encoder.time_kernel_gain);
  w.u64(s.encoder.seed);
  w.tensors(s.params.tensors);
  w.f64(s.optimizer.beta1);
  w.f64(s.optimizer.beta2);
  w.f64(s.optimizer.eps);
  w.f64(s.optimizer.learning_rate);
  w.u64(s.optimizer.t);
  w.tensors(s.optimizer.m);
  w.tensors(s.optimizer.v);
  w.u64(s.stats.mu.size());
  for (double v : s.stats.mu) w.f64(v);
  for (double v : s.stats.sigma) w.f64(v);
  w.f64(s.stats.rho);
  w.u8(s.stats.initialized ? 1 : 0);
  w.u64(s.step);
  w.str(s.rng.state());
  w.str(ckpt.meta);
  const std::uint32_t crc = crc32(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 12 || bytes.substr(0, 4) != std::string_view(kMagic, 4)) {
    throw IntegrityError("not a checkpoint (bad magic or too short)");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  Reader tail(bytes.substr(bytes.size() - 4));
  if (tail.u32() != crc32(body)) throw IntegrityError("checkpoint checksum mismatch");

  Reader r(body);
  r.need(4);
  for (int i = 0; i < 4; ++i) r.u8();
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(ck.version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  ModelState& s = ck.state;
  s.encoder.tau = r.u64();
  s.encoder.d_model = r.u64();
  s.encoder.time_embed_dim = r.u64();
  s.encoder.hidden_dim = r.u64();
  s.encoder.channels = r.u64();
  s.encoder.time_scale = r.f64();
  s.encoder.time_kernel_gain = r.f64();
  s.encoder.seed = r.u64();
  s.params.tensors = r.tensors();
  s.optimizer.beta1 = r.f64();
  s.optimizer.beta2 = r.f64();
  s.optimizer.eps = r.f64();
  s.optimizer.learning_rate = r.f64();
  s.optimizer.t = r.u64();
  s.optimizer.m = r.tensors();
  s.optimizer.v = r.tensors();
  const std::uint64_t c = r.u64();
  if (c > body.size()) throw IntegrityError("checkpoint stats size");
  s.stats.mu.resize(c);
  s.stats.sigma.resize(c);
  for (auto& v : s.stats.mu) v = r.f64();
  for (auto& v : s.stats.sigma) v = r.f64();
  s.stats.rho = r.f64();
  s.stats.initialized = r.u8() != 0;
  s.step = r.u64();
  s.rng.set_state(r.str());
  ck.meta = r.str();
  if (r.pos() != body.size()) throw IntegrityError("trailing bytes in checkpoint");
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::uint64_t params_checksum(const ModelParams& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (const auto& [name, m] : p.tensors) {
    for (char ch : name) mix(static_cast<std::uint8_t>(ch));
    for (double v : m.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) mix(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return h;
}

}  // namespace itimer
