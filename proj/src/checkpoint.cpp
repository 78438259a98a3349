#include "chemrel/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <fmt/format.h>

#include "chemrel/error.hpp"
#include "chemrel/io.hpp"

namespace chemrel {

namespace {

constexpr char kMagic[8] = {'C', 'H', 'E', 'M', 'R', 'E', 'L', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<unsigned char> take() { return std::move(out_); }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw FormatError("checkpoint truncated");
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t position() const { return pos_; }

 private:
  const std::vector<unsigned char>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> serialize(const Checkpoint& checkpoint) {
  const auto& model = checkpoint.model;
  const auto& c = model.config();
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  for (std::size_t v : {c.num_layers, c.num_heads, c.head_dim, c.ffn_dim, c.vocab_size, c.max_tokens, c.head_hidden})
    w.u64(v);
  w.u8(c.use_temperature_feature ? 1 : 0);

  const auto& entries = model.vocabulary().entries();
  w.u64(entries.size());
  for (const auto& e : entries) w.str(e);

  w.u64(checkpoint.metadata.size());
  for (const auto& [key, value] : checkpoint.metadata) {
    w.str(key);
    w.f64(value);
  }

  const auto params = model.parameters();
  w.u64(params.size());
  for (const auto& [name, t] : params) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.values()) w.f64(v);
  }
  return w.take();
}

Checkpoint deserialize(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  r.need(sizeof(kMagic));
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw FormatError("not a chemrel checkpoint");
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(fmt::format("unsupported checkpoint version {} (expected {})", version, kCheckpointVersion));
  }
  encoder::ModelConfig c;
  for (std::size_t* v : {&c.num_layers, &c.num_heads, &c.head_dim, &c.ffn_dim, &c.vocab_size, &c.max_tokens,
                         &c.head_hidden})
    *v = static_cast<std::size_t>(r.u64());
  c.use_temperature_feature = r.u8() != 0;

  const std::uint64_t vocab_count = r.u64();
  std::vector<std::string> entries;
  for (std::uint64_t i = 0; i < vocab_count; ++i) entries.push_back(r.str());

  Checkpoint out;
  const std::uint64_t meta_count = r.u64();
  for (std::uint64_t i = 0; i < meta_count; ++i) {
    std::string key = r.str();
    out.metadata[key] = r.f64();
  }

  out.model = encoder::zero_model(c, Vocabulary::from_entries(std::move(entries)));
  auto params = out.model.parameters();
  const std::uint64_t tensor_count = r.u64();
  if (tensor_count != params.size()) {
    throw FormatError(fmt::format("checkpoint has {} tensors, config implies {}", tensor_count, params.size()));
  }
  for (auto& [name, t] : params) {
    const std::string stored = r.str();
    if (stored != name) throw FormatError(fmt::format("expected tensor {}, found {}", name, stored));
    const std::uint32_t rank = r.u32();
    ad::Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::size_t>(r.u64()));
    if (shape != t.shape()) throw FormatError(fmt::format("tensor {} has unexpected shape", name));
    for (double& v : t.mutable_values()) v = r.f64();
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto bytes = serialize(checkpoint);
  io::write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string raw = io::read_file(path);
  return deserialize(std::vector<unsigned char>(raw.begin(), raw.end()));
}

}  // namespace chemrel
