#include "qedlm/checkpoint.hpp"

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "qedlm/errors.hpp"

namespace qedlm {

namespace {

constexpr char kMagic[4] = {'Q', 'E', 'D', 'F'};

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void i64(std::int64_t v) { le(static_cast<std::uint64_t>(v), 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  void le(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
  std::uint8_t u8() { need(1); return b_[pos_++]; }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(le(8)); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw FormatError("checkpoint: truncated at byte " + std::to_string(pos_));
  }

 private:
  std::uint64_t le(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string Checkpoint::meta(const std::string& key) const {
  for (const auto& [k, v] : metadata)
    if (k == key) return v;
  throw FormatError("checkpoint: missing metadata key '" + key + "'");
}

std::string Checkpoint::meta_or(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : metadata)
    if (k == key) return v;
  return fallback;
}

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : metadata) {
    if (k == key) {
      v = value;
      return;
    }
  }
  metadata.emplace_back(key, value);
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, 4);
  w.u8(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(ckpt.kind));
  w.u32(static_cast<std::uint32_t>(ckpt.config.size()));
  for (auto v : ckpt.config) w.i64(v);
  w.u32(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, values] : ckpt.params) {
    w.str(name);
    w.u64(values.size());
    for (double x : values) w.f64(x);
  }
  return w.take();
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic (not a QEDF file)");
  for (int i = 0; i < 4; ++i) r.u8();
  const auto version = r.u8();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: incompatible format version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  const auto kind = r.u8();
  if (kind < 1 || kind > 3) throw FormatError("checkpoint: unknown kind " + std::to_string(kind));
  c.kind = static_cast<CheckpointKind>(kind);
  const auto k = r.u32();
  for (std::uint32_t i = 0; i < k; ++i) c.config.push_back(r.i64());
  const auto m = r.u32();
  for (std::uint32_t i = 0; i < m; ++i) {
    auto key = r.str();
    c.metadata.emplace_back(std::move(key), r.str());
  }
  const auto p = r.u32();
  for (std::uint32_t i = 0; i < p; ++i) {
    auto name = r.str();
    const auto n = r.u64();
    r.need(n * 8);
    std::vector<double> values(n);
    for (auto& x : values) x = r.f64();
    c.params.emplace_back(std::move(name), std::move(values));
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  return c;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = serialize(ckpt);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

void store_params(const ParamList& params, Checkpoint& ckpt) {
  for (const auto& p : params)
    ckpt.params.emplace_back(p.name, std::vector<double>(p.tensor.values().begin(), p.tensor.values().end()));
}

void load_params(const Checkpoint& ckpt, const ParamList& params) {
  for (const auto& p : params) {
    const std::vector<double>* found = nullptr;
    for (const auto& [name, values] : ckpt.params)
      if (name == p.name) found = &values;
    if (!found) throw FormatError("checkpoint: parameter '" + p.name + "' missing");
    if (found->size() != p.tensor.numel()) {
      throw FormatError("checkpoint: parameter '" + p.name + "' has " + std::to_string(found->size()) +
                        " values, expected " + std::to_string(p.tensor.numel()));
    }
    Tensor t = p.tensor;
    std::copy(found->begin(), found->end(), t.mutable_values().begin());
  }
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const std::string& s, const std::string& what) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw ConfigError(what + ": '" + s + "' is not a real number");
  }
  return v;
}

}  // namespace qedlm
