#include "scfnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "scfnet/errors.hpp"

namespace scfnet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'C', 'F', 'N', 'E', 'T', 'C', 'K'};
constexpr char kTrailer[4] = {'E', 'N', 'D', '.'};

class Writer {
 public:
  template <typename V>
  void pod(V v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof v);
  }
  void raw(const char* p, std::size_t n) { out.insert(out.end(), p, p + n); }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes(b) {}
  void need(std::size_t n, const char* what) const {
    if (bytes.size() - pos < n) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
  template <typename V>
  V pod(const char* what) {
    need(sizeof(V), what);
    V v;
    std::memcpy(&v, bytes.data() + pos, sizeof v);
    pos += sizeof v;
    return v;
  }
  std::string str(const char* what) {
    const auto n = pod<std::uint32_t>(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
  bool match(const char* lit, std::size_t n) {
    need(n, "marker");
    const bool ok = std::memcmp(bytes.data() + pos, lit, n) == 0;
    pos += n;
    return ok;
  }
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
};

void write_section(Writer& w, const std::vector<StoredTensor>& ts, Precision prec) {
  w.pod(static_cast<std::uint32_t>(ts.size()));
  for (const auto& t : ts) {
    if (shape_numel(t.shape) != t.values.size()) throw ShapeError("checkpoint tensor " + t.name + " size mismatch");
    w.str(t.name);
    w.pod(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.pod(static_cast<std::uint64_t>(d));
    for (double v : t.values) {
      if (prec == Precision::F32) w.pod(static_cast<float>(v));
      else w.pod(v);
    }
  }
}

std::vector<StoredTensor> read_section(Reader& r, Precision prec, const char* section) {
  const auto count = r.pod<std::uint32_t>(section);
  std::vector<StoredTensor> ts;
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.str(section);
    const auto rank = r.pod<std::uint32_t>(section);
    if (rank > 8) throw FormatError("checkpoint tensor " + t.name + " has implausible rank " + std::to_string(rank));
    std::size_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.pod<std::uint64_t>(section);
      if (d > (std::uint64_t{1} << 32)) throw FormatError("checkpoint tensor " + t.name + " has implausible dims");
      t.shape.push_back(static_cast<std::size_t>(d));
      numel *= static_cast<std::size_t>(d);
    }
    r.need(numel * static_cast<std::size_t>(prec), section);
    t.values.resize(numel);
    for (auto& v : t.values) v = prec == Precision::F32 ? r.pod<float>(section) : r.pod<double>(section);
    ts.push_back(std::move(t));
  }
  return ts;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.pod(kCheckpointVersion);
  w.pod(static_cast<std::uint8_t>(c.precision));
  w.str(to_config_text(c.model));
  w.str(to_config_text(c.train));
  w.pod(c.epoch);
  w.pod(c.step);
  write_section(w, c.params, c.precision);
  write_section(w, c.buffers, c.precision);
  write_section(w, c.momentum, c.precision);
  w.raw(kTrailer, sizeof kTrailer);
  return std::move(w.out);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (bytes.size() < sizeof kMagic || !r.match(kMagic, sizeof kMagic)) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.pod<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  const auto width = r.pod<std::uint8_t>("value width");
  if (width != 4 && width != 8) throw FormatError("checkpoint value width " + std::to_string(width) + " is invalid");
  c.precision = static_cast<Precision>(width);
  try {
    c.model = parse_model_config(r.str("model config"));
    c.train = parse_train_config(r.str("train config"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  c.epoch = r.pod<std::uint32_t>("epoch");
  c.step = r.pod<std::uint64_t>("step");
  c.params = read_section(r, c.precision, "parameters");
  c.buffers = read_section(r, c.precision, "buffers");
  c.momentum = read_section(r, c.precision, "momentum");
  if (!r.match(kTrailer, sizeof kTrailer)) throw FormatError("checkpoint trailer missing");
  if (r.pos != bytes.size()) throw FormatError("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template <typename T>
std::vector<StoredTensor> store_tensors(const std::vector<NamedTensor<T>>& tensors) {
  std::vector<StoredTensor> out;
  out.reserve(tensors.size());
  for (const auto& nt : tensors) {
    out.push_back({nt.name, nt.tensor.shape(), std::vector<double>(nt.tensor.vec().begin(), nt.tensor.vec().end())});
  }
  return out;
}

template <typename T>
void restore_tensors(const std::vector<StoredTensor>& stored, const std::vector<NamedTensor<T>>& targets,
                     const std::string& section) {
  std::unordered_map<std::string, const StoredTensor*> by_name;
  for (const auto& s : stored) {
    if (!by_name.emplace(s.name, &s).second) throw FormatError("checkpoint " + section + " repeats " + s.name);
  }
  if (stored.size() != targets.size()) {
    throw FormatError("checkpoint " + section + " holds " + std::to_string(stored.size()) + " tensors, model has " +
                      std::to_string(targets.size()));
  }
  for (const auto& t : targets) {
    auto it = by_name.find(t.name);
    if (it == by_name.end()) throw FormatError("checkpoint " + section + " lacks " + t.name);
    if (it->second->shape != t.tensor.shape()) {
      throw FormatError("checkpoint " + section + " " + t.name + " has shape " + shape_str(it->second->shape) +
                        ", model expects " + shape_str(t.tensor.shape()));
    }
    auto dst = Tensor<T>(t.tensor).mutable_data();
    const auto& src = it->second->values;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
  }
}

template std::vector<StoredTensor> store_tensors(const std::vector<NamedTensor<float>>&);
template std::vector<StoredTensor> store_tensors(const std::vector<NamedTensor<double>>&);
template void restore_tensors(const std::vector<StoredTensor>&, const std::vector<NamedTensor<float>>&,
                              const std::string&);
template void restore_tensors(const std::vector<StoredTensor>&, const std::vector<NamedTensor<double>>&,
                              const std::string&);

}  // namespace scfnet
