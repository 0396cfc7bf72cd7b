#include "deepe/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string_view>
#include <vector>

#include "deepe/hash.hpp"

namespace deepe {

namespace {

constexpr std::string_view kMagic = "DEEPECKP";

class Writer {
 public:
  template <typename U>
  void put(U value) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i)
      bytes_.push_back(static_cast<unsigned char>(value >> (8 * i)));
  }
  void put_scalar(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void put_scalar(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s);
  }
  const std::vector<unsigned char>& bytes() const { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  double get_scalar(std::uint32_t scalar_bytes) {
    if (scalar_bytes == 4) return std::bit_cast<float>(get<std::uint32_t>());
    return std::bit_cast<double>(get<std::uint64_t>());
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string get_string() { return get_bytes(get<std::uint32_t>()); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) throw CheckpointError("checkpoint truncated");
  }
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

struct StoredTensor {
  std::uint32_t kind;
  std::uint64_t rows;
  std::uint64_t cols;
  std::vector<double> values;
};

struct Parsed {
  CheckpointInfo info;
  std::map<std::string, StoredTensor> tensors;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Parsed parse(const std::filesystem::path& path, bool with_tensors) {
  const std::vector<unsigned char> bytes = read_file(path);
  if (bytes.size() < kMagic.size() + sizeof(std::uint64_t)) {
    throw CheckpointError(path.string() + ": not a checkpoint (too short)");
  }
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  Fnv1a h;
  h.update({bytes.data(), body});
  Reader tail({bytes.data() + body, sizeof(std::uint64_t)});
  if (tail.get<std::uint64_t>() != h.digest()) {
    throw CheckpointError(path.string() + ": checksum mismatch, file is corrupted");
  }

  Reader r({bytes.data(), body});
  if (r.get_bytes(kMagic.size()) != kMagic) {
    throw CheckpointError(path.string() + ": bad magic");
  }
  Parsed p;
  auto& info = p.info;
  info.format_version = r.get<std::uint32_t>();
  if (info.format_version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported format version " +
                          std::to_string(info.format_version));
  }
  info.scalar_bytes = r.get<std::uint32_t>();
  if (info.scalar_bytes != 4 && info.scalar_bytes != 8) {
    throw CheckpointError(path.string() + ": bad scalar width");
  }
  info.entity_hash = r.get<std::uint64_t>();
  info.relation_hash = r.get<std::uint64_t>();
  info.num_entities = r.get<std::uint64_t>();
  info.num_relations = r.get<std::uint64_t>();
  try {
    info.config = parse_config_text(r.get_string());
    info.config.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(path.string() + ": bad embedded config: " + e.what());
  }
  if (!with_tensors) return p;

  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string();
    StoredTensor t;
    t.kind = r.get<std::uint32_t>();
    t.rows = r.get<std::uint64_t>();
    t.cols = r.get<std::uint64_t>();
    if (t.rows != 0 && t.cols > r.remaining() / t.rows) {
      throw CheckpointError(path.string() + ": tensor " + name + " larger than file");
    }
    t.values.resize(t.rows * t.cols);
    for (auto& v : t.values) v = r.get_scalar(info.scalar_bytes);
    p.tensors.emplace(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) throw CheckpointError(path.string() + ": trailing bytes");
  return p;
}

template <typename T>
void restore(Matrix<T>& dst, const std::string& name, std::uint32_t kind,
             std::map<std::string, StoredTensor>& tensors) {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw CheckpointError("checkpoint lacks tensor " + name);
  const StoredTensor& t = it->second;
  if (t.kind != kind || t.rows != dst.rows() || t.cols != dst.cols()) {
    throw CheckpointError("checkpoint tensor " + name + " has shape (" +
                          std::to_string(t.rows) + "x" + std::to_string(t.cols) +
                          "), model expects " + dst.shape_string());
  }
  auto out = dst.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(t.values[i]);
  tensors.erase(it);
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, Model<T>& model,
                     const RunConfig& config, std::uint64_t entity_hash,
                     std::uint64_t relation_hash) {
  RunConfig stored = config;
  stored.model = model.config();
  stored.precision = sizeof(T) == 4 ? 32 : 64;

  Writer w;
  w.put_bytes(kMagic);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(sizeof(T)));
  w.put(entity_hash);
  w.put(relation_hash);
  w.put(static_cast<std::uint64_t>(model.num_entities()));
  w.put(static_cast<std::uint64_t>(model.num_relations()));
  w.put_string(to_config_text(stored));

  const auto params = model.parameters();
  const auto buffers = model.buffers();
  w.put(static_cast<std::uint32_t>(params.size() + buffers.size()));
  auto put_tensor = [&w](const std::string& name, std::uint32_t kind, const Matrix<T>& m) {
    w.put_string(name);
    w.put(kind);
    w.put(static_cast<std::uint64_t>(m.rows()));
    w.put(static_cast<std::uint64_t>(m.cols()));
    for (T v : m.values()) w.put_scalar(v);
  };
  for (const auto& p : params) put_tensor(p.name, 0, *p.value);
  for (const auto& b : buffers) put_tensor(b.name, 1, *b.value);
  Fnv1a h;
  h.update(w.bytes());
  w.put(h.digest());

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(w.bytes().data()),
              static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  Parsed p = parse(path, true);
  Model<T> model(p.info.config.model, p.info.num_entities, p.info.num_relations);
  for (const auto& param : model.parameters()) restore(*param.value, param.name, 0, p.tensors);
  for (const auto& buf : model.buffers()) restore(*buf.value, buf.name, 1, p.tensors);
  if (!p.tensors.empty()) {
    throw CheckpointError(path.string() + ": unexpected tensor " + p.tensors.begin()->first);
  }
  if (info) *info = p.info;
  return model;
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  return parse(path, false).info;
}

template void save_checkpoint(const std::filesystem::path&, Model<float>&, const RunConfig&,
                              std::uint64_t, std::uint64_t);
template void save_checkpoint(const std::filesystem::path&, Model<double>&, const RunConfig&,
                              std::uint64_t, std::uint64_t);
template Model<float> load_checkpoint(const std::filesystem::path&, CheckpointInfo*);
template Model<double> load_checkpoint(const std::filesystem::path&, CheckpointInfo*);

}  // namespace deepe
