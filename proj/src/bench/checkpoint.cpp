#include "disca/bench/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "disca/errors.hpp"

namespace disca::bench {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'I', 'S', 'C', 'A', 'C', 'K', 'P'};

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t n) : p_(data), end_(data + n) {}
  template <class T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (static_cast<std::size_t>(end_ - p_) < n) throw CorruptCheckpoint("checkpoint: truncated body");
    const std::uint8_t* at = p_;
    p_ += n;
    return at;
  }
  bool done() const { return p_ == end_; }

 private:
  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

Stage stage_from(std::uint8_t v) {
  if (v > static_cast<std::uint8_t>(Stage::kDiscriminator))
    throw CorruptCheckpoint("checkpoint: unknown stage " + std::to_string(v));
  return static_cast<Stage>(v);
}

}  // namespace

const char* to_string(Stage s) {
  switch (s) {
    case Stage::kBaseFm: return "BASE_FM";
    case Stage::kCfgDistilled: return "CFG_DISTILLED";
    case Stage::kMeanFlow: return "MEANFLOW";
    case Stage::kPredictor: return "PREDICTOR";
    case Stage::kDiscriminator: return "DISCRIMINATOR";
  }
  return "?";
}

std::string hex(const Digest& d) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (std::uint8_t b : d) {
    s += digits[b >> 4];
    s += digits[b & 15];
  }
  return s;
}

Digest sha256(const std::uint8_t* data, std::size_t n) {
  Digest d{};
  unsigned int len = 0;
  if (EVP_Digest(data, n, d.data(), &len, EVP_sha256(), nullptr) != 1 || len != d.size())
    throw std::runtime_error("sha256: digest computation failed");
  return d;
}

bool lineage_allowed(Stage child, std::optional<Stage> parent) {
  switch (child) {
    case Stage::kBaseFm: return !parent;
    case Stage::kCfgDistilled: return parent == Stage::kBaseFm;
    case Stage::kMeanFlow: return parent == Stage::kCfgDistilled || parent == Stage::kBaseFm;
    case Stage::kPredictor:
    case Stage::kDiscriminator: return parent == Stage::kMeanFlow;
  }
  return false;
}

std::vector<std::uint8_t> serialize(const Checkpoint& c) {
  require(lineage_allowed(c.stage, c.parent ? std::optional<Stage>(c.parent->stage) : std::nullopt),
          std::string("checkpoint: stage ") + to_string(c.stage) + " cannot descend from " +
              (c.parent ? to_string(c.parent->stage) : "nothing"));
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(c.format_version);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.stage));
  w.put<std::uint8_t>(c.parent ? 1 : 0);
  if (c.parent) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(c.parent->stage));
    w.bytes(c.parent->digest.data(), c.parent->digest.size());
  }
  w.put<std::uint64_t>(c.config.size());
  w.bytes(c.config.data(), c.config.size());
  w.put<std::uint64_t>(c.params.size());
  for (const auto& [name, t] : c.params.entries()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.put<std::uint64_t>(e);
    w.bytes(t.ptr(), t.bytes());
  }
  const Digest d = sha256(w.out.data(), w.out.size());
  w.bytes(d.data(), d.size());
  return std::move(w.out);
}

Digest digest_of(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 32) throw CorruptCheckpoint("checkpoint: file too short");
  Digest d;
  std::copy(bytes.end() - 32, bytes.end(), d.begin());
  return d;
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kFixed = sizeof(kMagic) + 4;
  if (bytes.size() < kFixed + 32) throw CorruptCheckpoint("checkpoint: file too short");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw CorruptCheckpoint("checkpoint: bad magic");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), 4);
  if (version != kCheckpointVersion)
    throw UnsupportedVersion("checkpoint: format version " + std::to_string(version) + " (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  const std::size_t body = bytes.size() - 32;
  const Digest want = digest_of(bytes);
  const Digest got = sha256(bytes.data(), body);
  if (want != got)
    throw CorruptCheckpoint("checkpoint: digest mismatch (stored " + hex(want) + ", computed " + hex(got) + ")");

  Reader r(bytes.data() + kFixed, body - kFixed);
  Checkpoint c;
  c.format_version = version;
  c.stage = stage_from(r.get<std::uint8_t>());
  if (r.get<std::uint8_t>() != 0) {
    Lineage l;
    l.stage = stage_from(r.get<std::uint8_t>());
    std::memcpy(l.digest.data(), r.take(32), 32);
    c.parent = l;
  }
  const auto clen = r.get<std::uint64_t>();
  const auto* cfg = r.take(clen);
  c.config.assign(reinterpret_cast<const char*>(cfg), clen);
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto nlen = r.get<std::uint32_t>();
    const auto* nm = r.take(nlen);
    std::string name(reinterpret_cast<const char*>(nm), nlen);
    const auto rank = r.get<std::uint32_t>();
    ad::Shape shape;
    std::size_t size = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
      size *= shape.back();
    }
    std::vector<double> data(size);
    std::memcpy(data.data(), r.take(size * sizeof(double)), size * sizeof(double));
    c.params.set(name, ad::Tensor(shape, std::move(data)));
  }
  if (!r.done()) throw CorruptCheckpoint("checkpoint: trailing bytes after the last tensor");
  if (!lineage_allowed(c.stage, c.parent ? std::optional<Stage>(c.parent->stage) : std::nullopt))
    throw LineageError(std::string("checkpoint: ") + to_string(c.stage) + " cannot descend from " +
                       (c.parent ? to_string(c.parent->stage) : "nothing"));
  return c;
}

Digest save_checkpoint(const std::string& path, const Checkpoint& c) {
  const std::vector<std::uint8_t> bytes = serialize(c);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
  return digest_of(bytes);
}

Checkpoint load_checkpoint(const std::string& path, Digest* digest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Checkpoint c = deserialize(bytes);
  if (digest) *digest = digest_of(bytes);
  return c;
}

void require_parent(const Checkpoint& child, Stage parent_stage, const Digest& parent_digest) {
  if (!child.parent || child.parent->stage != parent_stage || child.parent->digest != parent_digest)
    throw LineageError(std::string("checkpoint: ") + to_string(child.stage) + " was not derived from the given " +
                       to_string(parent_stage) + " checkpoint (" + hex(parent_digest) + ")");
}

}  // namespace disca::bench
