#include "celif/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "celif/error.hpp"

namespace celif {

namespace {

constexpr char kMagic[8] = {'C', 'E', 'L', 'I', 'F', 'C', 'K', '\0'};
constexpr std::uint64_t kMaxRank = 3;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::uint64_t fnv1a(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <class T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_text(const std::string& s, bool wide) {
    if (wide) put<std::uint64_t>(s.size()); else put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_text(bool wide, const char* what) {
    const std::uint64_t n = wide ? get<std::uint64_t>(what) : get<std::uint32_t>(what);
    need(n, what);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  void read_reals(Real* out, std::size_t count, const char* what) {
    need(count * sizeof(Real), what);
    std::memcpy(out, bytes_.data() + pos_, count * sizeof(Real));
    pos_ += count * sizeof(Real);
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::uint64_t n, const char* what) const {
    if (n > end_ - pos_)
      throw CheckpointError("checkpoint truncated while reading " + std::string(what) + " at byte " +
                            std::to_string(pos_));
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  Writer w;
  w.bytes.insert(w.bytes.end(), std::begin(kMagic), std::end(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_text(ck.config_text, true);
  w.put<std::uint64_t>(ck.iteration);
  w.put<std::uint64_t>(ck.adam_step);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    w.put_text(name, false);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put<std::uint64_t>(d);
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.raw());
    w.bytes.insert(w.bytes.end(), p, p + t.size() * sizeof(Real));
  }
  w.put<std::uint64_t>(fnv1a(w.bytes.data(), w.bytes.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(w.bytes.data()), static_cast<std::streamsize>(w.bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
  if (bytes.size() < sizeof kMagic + sizeof(std::uint64_t))
    throw CheckpointError("checkpoint truncated at byte " + std::to_string(bytes.size()));
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);

  Reader r(bytes, body);
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.get<std::uint8_t>("magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");

  Checkpoint ck;
  ck.config_text = r.get_text(true, "config");
  ck.iteration = r.get<std::uint64_t>("iteration");
  ck.adam_step = r.get<std::uint64_t>("adam step");
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_text(false, "tensor name");
    const auto rank = r.get<std::uint32_t>("tensor rank");
    if (rank > kMaxRank) throw CheckpointError("tensor '" + name + "' has unsupported rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto extent = r.get<std::uint64_t>("tensor shape");
      if (extent == 0 || extent > body) throw CheckpointError("tensor '" + name + "' has an invalid shape");
      total *= extent;
      if (total > body) throw CheckpointError("checkpoint truncated in tensor '" + name + "'");
      shape.push_back(static_cast<std::size_t>(extent));
    }
    Tensor t;
    if (rank > 0) {
      t = Tensor(shape);
      r.read_reals(t.raw(), t.size(), "tensor data");
    }
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (r.pos() != body)
    throw CheckpointError("checkpoint has " + std::to_string(body - r.pos()) + " unexpected trailing bytes");
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  if (stored != fnv1a(bytes.data(), body)) throw CheckpointError("checkpoint checksum mismatch (file is corrupt)");
  return ck;
}

Checkpoint make_checkpoint(const RunConfig& config, Model& model, const AdamState* adam, std::uint64_t iteration) {
  Checkpoint ck;
  ck.config_text = config_to_text(config);
  ck.iteration = iteration;
  auto params = model.named_parameters();
  for (const auto& p : params) ck.tensors.emplace_back(p.name, *p.tensor);
  if (adam && adam->step > 0) {
    if (adam->first_moment.size() != params.size() || adam->second_moment.size() != params.size())
      throw CheckpointError("optimizer state does not match the model parameters");
    ck.adam_step = adam->step;
    for (std::size_t i = 0; i < params.size(); ++i) ck.tensors.emplace_back("adam.m." + params[i].name, adam->first_moment[i]);
    for (std::size_t i = 0; i < params.size(); ++i) ck.tensors.emplace_back("adam.v." + params[i].name, adam->second_moment[i]);
  }
  return ck;
}

namespace {

void copy_checked(const Checkpoint& ck, const std::string& name, Tensor& dst) {
  const Tensor* src = ck.find(name);
  if (!src) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
  if (src->shape() != dst.shape())
    throw CheckpointError("tensor '" + name + "' has shape " + shape_string(src->shape()) + ", model expects " +
                          shape_string(dst.shape()));
  dst = *src;
}

}  // namespace

Model restore_model(const Checkpoint& ck) {
  const RunConfig config = parse_config(ck.config_text);
  Model model = init_model(model_spec(config), Rng(config.seed), InitOptions{config.te_mean, config.te_std});
  std::size_t expected = 0;
  for (auto& p : model.named_parameters()) {
    copy_checked(ck, p.name, *p.tensor);
    ++expected;
  }
  std::size_t params_in_file = 0;
  for (const auto& [name, t] : ck.tensors)
    if (name.rfind("adam.", 0) != 0) ++params_in_file;
  if (params_in_file != expected)
    throw CheckpointError("checkpoint holds " + std::to_string(params_in_file) + " parameter tensors, model has " +
                          std::to_string(expected));
  return model;
}

void restore_adam(const Checkpoint& ck, Model& model, AdamState& state) {
  state.step = ck.adam_step;
  state.first_moment.clear();
  state.second_moment.clear();
  if (ck.adam_step == 0) return;
  for (auto& p : model.named_parameters()) {
    Tensor m(p.tensor->shape()), v(p.tensor->shape());
    copy_checked(ck, "adam.m." + p.name, m);
    copy_checked(ck, "adam.v." + p.name, v);
    state.first_moment.push_back(std::move(m));
    state.second_moment.push_back(std::move(v));
  }
}

}  // namespace celif

namespace celif {

std::string describe_checkpoint(const Checkpoint& ck) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "version %u\niteration %llu\nadam_step %llu\ntensors %zu\n", kCheckpointVersion,
                static_cast<unsigned long long>(ck.iteration), static_cast<unsigned long long>(ck.adam_step),
                ck.tensors.size());
  out += line;
  out += "[config]\n" + ck.config_text + "[tensors]\n";
  for (const auto& [name, t] : ck.tensors) {
    double sum = 0, lo = 0, hi = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      sum += t[i];
      lo = i ? std::min(lo, t[i]) : t[i];
      hi = i ? std::max(hi, t[i]) : t[i];
    }
    const std::uint64_t hash = fnv1a(reinterpret_cast<const std::uint8_t*>(t.raw()), t.size() * sizeof(Real));
    std::snprintf(line, sizeof line, "%-24s %-12s sum=%.17g min=%.17g max=%.17g hash=%016llx\n", name.c_str(),
                  shape_string(t.shape()).c_str(), sum, lo, hi, static_cast<unsigned long long>(hash));
    out += line;
  }
  return out;
}

}  // namespace celif
