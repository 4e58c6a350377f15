#include "umff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace umff::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

FormatError::FormatError(const std::string& what, std::size_t position)
    : std::runtime_error("checkpoint: " + what + " at byte " + std::to_string(position)), position_(position) {}

namespace {

class Writer {
 public:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void floats(const std::vector<float>& v) { raw(v.data(), v.size() * sizeof(float)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

  void raw(void* p, std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) throw FormatError(std::string("truncated ") + what, pos_);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    raw(&v, 4, what);
    return v;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    raw(&v, 8, what);
    return v;
  }
  std::string text(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) throw FormatError(std::string("truncated ") + what, pos_);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<float> floats(std::size_t n, const char* what) {
    if ((in_.size() - pos_) / sizeof(float) < n) throw FormatError(std::string("truncated ") + what, pos_);
    std::vector<float> v(n);
    raw(v.data(), n * sizeof(float), what);
    return v;
  }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::size_t product(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string dims_str(const std::vector<std::uint32_t>& dims) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? ", " : "") << dims[i];
  os << ')';
  return os.str();
}

}  // namespace

std::string encode(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  const std::string record = ckpt.config.to_record();
  w.u32(static_cast<std::uint32_t>(record.size()));
  w.raw(record.data(), record.size());
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    if (p.values.size() != product(p.dims)) throw std::invalid_argument("checkpoint: value count mismatch for " + p.name);
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.raw(p.name.data(), p.name.size());
    w.u32(static_cast<std::uint32_t>(p.dims.size()));
    for (auto d : p.dims) w.u32(d);
    w.u32(kDtypeFloat32);
    w.floats(p.values);
  }
  if (ckpt.optimizer) {
    const auto& o = *ckpt.optimizer;
    if (o.m.size() != ckpt.params.size() || o.v.size() != ckpt.params.size()) {
      throw std::invalid_argument("checkpoint: optimizer state does not cover every parameter");
    }
    w.raw(kOptimizerTag, 4);
    w.u64(o.step);
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
      if (o.m[i].size() != ckpt.params[i].values.size() || o.v[i].size() != ckpt.params[i].values.size()) {
        throw std::invalid_argument("checkpoint: optimizer moment size mismatch for " + ckpt.params[i].name);
      }
      w.floats(o.m[i]);
      w.floats(o.v[i]);
    }
  }
  return w.take();
}

Checkpoint decode(std::string_view bytes) {
  Reader r(bytes);
  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic (expected \"UMFF\")", 0);
  const std::size_t version_pos = r.pos();
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw FormatError("unsupported version " + std::to_string(version) + " (expected " + std::to_string(kVersion) + ")",
                      version_pos);
  }
  Checkpoint ckpt;
  const std::uint32_t record_len = r.u32("config record length");
  const std::size_t record_pos = r.pos();
  const std::string record = r.text(record_len, "config record");
  try {
    ckpt.config = model::ModelConfig::from_record(record);
  } catch (const std::exception& e) {
    throw FormatError(std::string("invalid config record: ") + e.what(), record_pos);
  }
  const std::uint32_t count = r.u32("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    ParamRecord p;
    p.name = r.text(r.u32("name length"), "parameter name");
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) throw FormatError("implausible rank " + std::to_string(rank) + " for " + p.name, r.pos() - 4);
    for (std::uint32_t d = 0; d < rank; ++d) p.dims.push_back(r.u32("dims"));
    const std::size_t dtype_pos = r.pos();
    const std::uint32_t dtype = r.u32("dtype");
    if (dtype != kDtypeFloat32) throw FormatError("unknown dtype " + std::to_string(dtype) + " for " + p.name, dtype_pos);
    p.values = r.floats(product(p.dims), "parameter values");
    ckpt.params.push_back(std::move(p));
  }
  if (!r.done()) {
    const std::size_t tag_pos = r.pos();
    char tag[4];
    r.raw(tag, 4, "section tag");
    if (std::memcmp(tag, kOptimizerTag, 4) != 0) throw FormatError("unknown trailing section", tag_pos);
    OptimizerState o;
    o.step = r.u64("optimizer step");
    for (const auto& p : ckpt.params) {
      o.m.push_back(r.floats(p.values.size(), "optimizer moments"));
      o.v.push_back(r.floats(p.values.size(), "optimizer moments"));
    }
    ckpt.optimizer = std::move(o);
    if (!r.done()) throw FormatError("trailing bytes after optimizer section", r.pos());
  }
  return ckpt;
}

void save(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode(ckpt);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), {}};
  return decode(bytes);
}

Checkpoint capture(const model::Model<float>& model, const OptimizerState* optimizer) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  for (const auto& e : model.params().entries()) {
    ParamRecord p;
    p.name = e.name;
    for (int d : e.dims) p.dims.push_back(static_cast<std::uint32_t>(d));
    p.values.assign(e.tensor.data().begin(), e.tensor.data().end());
    ckpt.params.push_back(std::move(p));
  }
  if (optimizer) ckpt.optimizer = *optimizer;
  return ckpt;
}

void restore(model::Model<float>& model, const Checkpoint& ckpt) {
  auto& entries = model.params().entries();
  const std::size_t n = std::min(entries.size(), ckpt.params.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = entries[i];
    const auto& p = ckpt.params[i];
    std::vector<std::uint32_t> dims(e.dims.begin(), e.dims.end());
    if (e.name != p.name || dims != p.dims) {
      throw std::runtime_error("checkpoint: parameter " + std::to_string(i) + " mismatch: model has '" + e.name +
                               "' " + dims_str(dims) + ", checkpoint has '" + p.name + "' " + dims_str(p.dims));
    }
  }
  if (entries.size() != ckpt.params.size()) {
    const std::string first = entries.size() > n ? "model parameter '" + entries[n].name + "'"
                                                 : "checkpoint parameter '" + ckpt.params[n].name + "'";
    throw std::runtime_error("checkpoint: parameter count mismatch (model " + std::to_string(entries.size()) +
                             ", checkpoint " + std::to_string(ckpt.params.size()) + "), first unmatched is " + first);
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = entries[i].tensor.data();
    std::copy(ckpt.params[i].values.begin(), ckpt.params[i].values.end(), dst.begin());
  }
}

model::Model<float> instantiate(const Checkpoint& ckpt) {
  auto m = model::Model<float>::build(ckpt.config, 0);
  restore(m, ckpt);
  return m;
}

}  // namespace umff::checkpoint
