#include "mire/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace mire {

namespace {

constexpr std::string_view kMagic = "MIRECKPT";

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v), 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(std::string_view s) { buf_.append(s); }
  void str(std::string_view s) {
    u64(s.size());
    raw(s);
  }
  void vec(const Vec& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  std::string& buffer() { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(get(8)); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() { return std::string(raw(count(1))); }
  Vec vec() {
    Vec v(count(8));
    for (double& x : v) x = f64();
    return v;
  }
  /// Element count that must fit in the remaining bytes.
  std::size_t count(std::size_t elem_bytes) {
    const std::uint64_t n = u64();
    if (elem_bytes != 0 && n > (b_.size() - pos_) / elem_bytes) throw std::runtime_error("checkpoint: truncated or corrupt (count " + std::to_string(n) + ")");
    return static_cast<std::size_t>(n);
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw std::runtime_error("checkpoint: truncated at byte " + std::to_string(pos_));
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view b_;
  std::size_t pos_ = 0;
};

void write_sample(Writer& w, const Sample& s) {
  w.i64(s.label);
  w.vec(s.x);
}

Sample read_sample(Reader& r) {
  Sample s;
  s.label = static_cast<int>(r.i64());
  s.x = r.vec();
  return s;
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string encode_state(const TrainerState& state) {
  Writer w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);

  const auto& cfg = state.extractor.config();
  w.u64(cfg.input_dim);
  w.u64(cfg.hidden.size());
  for (auto h : cfg.hidden) w.u64(h);
  w.u64(cfg.feature_dim);
  w.u64(cfg.head_hidden);
  w.u64(cfg.head_out);
  w.u64(cfg.seed);

  const auto params = state.extractor.parameters();
  w.u64(params.size());
  for (const auto& p : params) {
    w.u64(p.rank());
    for (auto d : p.shape()) w.u64(d);
    for (double v : p.data()) w.f64(v);
  }

  w.u64(state.memory.capacity());
  w.u64(state.memory.slots().size());
  for (const auto& [label, slot] : state.memory.slots()) {
    w.i64(label);
    w.u64(slot.seen);
    w.u64(slot.entries.size());
    for (const auto& e : slot.entries) {
      write_sample(w, e.sample);
      w.vec(e.z_stored);
      w.u64(e.insert_iteration);
    }
  }

  w.f64(state.prototypes.gamma());
  w.u64(state.prototypes.all().size());
  for (const auto& [label, p] : state.prototypes.all()) {
    w.i64(label);
    w.vec(p);
  }

  w.u64(state.iteration);
  w.str(state.rng.serialize());
  w.u64(fnv1a(w.buffer()));
  return std::move(w.buffer());
}

TrainerState decode_state(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 4 + 8) throw std::runtime_error("checkpoint: truncated header");
  if (bytes.substr(0, kMagic.size()) != kMagic) throw std::runtime_error("checkpoint: bad magic (not a checkpoint file)");
  Reader r(bytes);
  r.raw(kMagic.size());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: version " + std::to_string(version) + " unsupported (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  {
    const auto body = bytes.substr(0, bytes.size() - 8);
    Reader tail(bytes.substr(bytes.size() - 8));
    if (tail.u64() != fnv1a(body)) throw std::runtime_error("checkpoint: checksum mismatch (truncated or corrupt)");
  }

  ExtractorConfig cfg;
  cfg.input_dim = r.u64();
  cfg.hidden.resize(r.count(8));
  for (auto& h : cfg.hidden) h = r.u64();
  cfg.feature_dim = r.u64();
  cfg.head_hidden = r.u64();
  cfg.head_out = r.u64();
  cfg.seed = r.u64();

  std::vector<Vec> values(r.count(8));
  const auto expected = Extractor::init(cfg, 0).parameters();
  if (values.size() != expected.size()) throw std::runtime_error("checkpoint: parameter count does not match the architecture");
  for (std::size_t k = 0; k < values.size(); ++k) {
    ndgrad::Shape shape(r.count(8));
    for (auto& d : shape) d = r.u64();
    if (shape != expected[k].shape())
      throw std::runtime_error("checkpoint: parameter " + std::to_string(k) + " has shape " + ndgrad::to_string(shape) +
                               ", expected " + ndgrad::to_string(expected[k].shape()));
    values[k].resize(ndgrad::numel(shape));
    for (double& v : values[k]) v = r.f64();
  }

  const std::size_t capacity = r.u64();
  std::map<int, EpisodicMemory::ClassSlot> slots;
  const std::size_t n_slots = r.count(24);
  for (std::size_t k = 0; k < n_slots; ++k) {
    const int label = static_cast<int>(r.i64());
    auto& slot = slots[label];
    slot.seen = r.u64();
    slot.entries.resize(r.count(32));
    for (auto& e : slot.entries) {
      e.sample = read_sample(r);
      e.z_stored = r.vec();
      e.insert_iteration = r.u64();
    }
  }

  const double gamma = r.f64();
  std::map<int, Vec> protos;
  const std::size_t n_protos = r.count(16);
  for (std::size_t k = 0; k < n_protos; ++k) {
    const int label = static_cast<int>(r.i64());
    protos[label] = r.vec();
  }

  const std::uint64_t iteration = r.u64();
  Rng rng;
  rng.deserialize(r.str());
  r.u64();  // checksum, verified above
  if (r.pos() != bytes.size()) throw std::runtime_error("checkpoint: trailing bytes");

  return TrainerState{Extractor::from_parameters(cfg, values), EpisodicMemory::restore(capacity, std::move(slots)),
                      PrototypeTable::restore(gamma, std::move(protos)), iteration, std::move(rng)};
}

void save_checkpoint(const std::filesystem::path& path, const TrainerState& state) {
  const std::string bytes = encode_state(state);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainerState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_state(bytes);
}

}  // namespace mire
