#include "tactile/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tactile/error.hpp"

namespace tactile {

namespace {

constexpr char kMagic[8] = {'T', 'A', 'C', 'T', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(const unsigned char* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void blob(const Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
  }
  std::vector<unsigned char> take() { return std::move(out_); }
  const std::vector<unsigned char>& data() const { return out_; }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  Reader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}

  void need(std::size_t k) const {
    if (k > n_ - at_) throw Error(ErrorCode::kCorruptCheckpoint, "corrupt checkpoint: truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[at_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[at_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t len = u64();
    need(len);
    std::string s(reinterpret_cast<const char*>(p_ + at_), len);
    at_ += len;
    return s;
  }
  Matrix blob(std::uint64_t rows, std::uint64_t cols) {
    if (cols != 0 && rows > (n_ - at_) / 8 / cols) throw Error(ErrorCode::kCorruptCheckpoint, "corrupt checkpoint: blob too large");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
    return m;
  }
  bool done() const { return at_ == n_; }

 private:
  const unsigned char* p_;
  std::size_t n_;
  std::size_t at_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(Checkpoint::kVersion);
  w.str(c.stage);
  w.u64(c.epoch);
  w.u64(c.seed);
  w.u64(c.best_epoch);
  w.f64(c.best_metric);
  w.str(c.config_text);
  w.u64(c.params.size());
  for (const auto& [name, m] : c.params) {
    w.str(name);
    w.u64(static_cast<std::uint64_t>(m.rows()));
    w.u64(static_cast<std::uint64_t>(m.cols()));
    w.blob(m);
  }
  w.u64(c.adam_steps);
  w.f64(c.adam_lr);
  const bool has_state = c.adam_m.size() == c.params.size() && c.adam_v.size() == c.params.size();
  w.u64(has_state ? 1 : 0);
  if (has_state)
    for (std::size_t i = 0; i < c.params.size(); ++i) {
      w.blob(c.adam_m[i]);
      w.blob(c.adam_v[i]);
    }
  w.u64(c.stats.c);
  w.u64(c.stats.h);
  w.u64(c.stats.w);
  for (double v : c.stats.mean) w.f64(v);
  for (double v : c.stats.stddev) w.f64(v);
  const std::uint64_t sum = fnv1a(w.data().data(), w.data().size());
  w.u64(sum);
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw Error(ErrorCode::kCorruptCheckpoint, "corrupt checkpoint: bad magic");
  const std::size_t body = bytes.size() - 8;
  Reader tail(bytes.data() + body, 8);
  if (tail.u64() != fnv1a(bytes.data(), body))
    throw Error(ErrorCode::kCorruptCheckpoint, "corrupt checkpoint: checksum mismatch");

  Reader r(bytes.data() + sizeof kMagic, body - sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion)
    throw Error(ErrorCode::kCorruptCheckpoint, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.stage = r.str();
  c.epoch = r.u64();
  c.seed = r.u64();
  c.best_epoch = r.u64();
  c.best_metric = r.f64();
  c.config_text = r.str();
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = r.str();
    const std::uint64_t rows = r.u64(), cols = r.u64();
    c.params.emplace_back(std::move(name), r.blob(rows, cols));
  }
  c.adam_steps = r.u64();
  c.adam_lr = r.f64();
  if (r.u64() == 1)
    for (const auto& [name, m] : c.params) {
      c.adam_m.push_back(r.blob(static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())));
      c.adam_v.push_back(r.blob(static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())));
    }
  c.stats.c = r.u64();
  c.stats.h = r.u64();
  c.stats.w = r.u64();
  const std::size_t cells = c.stats.c * c.stats.h * c.stats.w;
  r.need(cells * 16);
  for (std::size_t i = 0; i < cells; ++i) c.stats.mean.push_back(r.f64());
  for (std::size_t i = 0; i < cells; ++i) c.stats.stddev.push_back(r.f64());
  if (!r.done()) throw Error(ErrorCode::kCorruptCheckpoint, "corrupt checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = encode_checkpoint(ckpt);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "missing file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void restore_parameters(ParameterStore& store, const Checkpoint& ckpt) {
  if (ckpt.params.size() != store.size())
    throw Error(ErrorCode::kArchitectureMismatch, "checkpoint holds " + std::to_string(ckpt.params.size()) +
                                                      " parameters, model has " + std::to_string(store.size()));
  for (const auto& [name, m] : ckpt.params) {
    if (!store.contains(name)) throw Error(ErrorCode::kArchitectureMismatch, "model has no parameter '" + name + "'");
    Matrix& dst = store.value(store.find(name));
    if (dst.rows() != m.rows() || dst.cols() != m.cols())
      throw Error(ErrorCode::kArchitectureMismatch, "shape of '" + name + "' differs from the checkpoint");
    dst = m;
  }
}

std::vector<std::pair<std::string, Matrix>> snapshot_parameters(const ParameterStore& store) {
  std::vector<std::pair<std::string, Matrix>> out;
  out.reserve(store.size());
  for (ParamId i = 0; i < store.size(); ++i) out.emplace_back(store.name(i), store.value(i));
  return out;
}

}  // namespace tactile
