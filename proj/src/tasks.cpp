#include "celif/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "celif/error.hpp"

namespace celif {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Mse: return "mse";
    case LossKind::CrossEntropyMean: return "ce-mean";
    case LossKind::CrossEntropyPerStep: return "ce-per-step";
  }
  return "?";
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Adding: return "adding";
    case TaskKind::CopyMemory: return "copy";
    case TaskKind::SeqMnist: return "seq-mnist";
    case TaskKind::PsMnist: return "ps-mnist";
  }
  return "?";
}

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "adding") return TaskKind::Adding;
  if (name == "copy" || name == "copy-memory") return TaskKind::CopyMemory;
  if (name == "seq-mnist" || name == "smnist") return TaskKind::SeqMnist;
  if (name == "ps-mnist" || name == "psmnist") return TaskKind::PsMnist;
  throw ConfigError("unknown task '" + name + "' (expected adding, copy, seq-mnist or ps-mnist)");
}

TaskBatch gen_adding(std::size_t seq_len, std::size_t batch, Rng& rng) {
  if (seq_len < 2) throw ConfigError("adding problem needs T >= 2, got " + std::to_string(seq_len));
  if (batch == 0) throw ConfigError("adding problem needs a positive batch size");
  TaskBatch out;
  out.inputs = Tensor({seq_len, batch, 2});
  out.targets = Tensor({batch, 1});
  out.loss = LossKind::Mse;
  out.seq_len = seq_len;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < seq_len; ++t) out.inputs.at(t, b, 0) = rng.uniform();
    const std::size_t first = rng.below(seq_len);
    std::size_t second = rng.below(seq_len - 1);
    if (second >= first) ++second;
    out.inputs.at(first, b, 1) = 1.0;
    out.inputs.at(second, b, 1) = 1.0;
    out.targets.at(b, 0) = out.inputs.at(first, b, 0) + out.inputs.at(second, b, 0);
  }
  return out;
}

TaskBatch gen_copy_memory(std::size_t delay, std::size_t batch, Rng& rng) {
  if (delay < 1) throw ConfigError("copy memory needs T >= 1");
  if (batch == 0) throw ConfigError("copy memory needs a positive batch size");
  const std::size_t length = delay + 2 * kCopyKeyLength;
  TaskBatch out;
  out.inputs = Tensor({length, batch, kCopySymbols});
  out.targets = Tensor({length, batch});
  out.loss = LossKind::CrossEntropyPerStep;
  out.seq_len = length;
  out.scored_steps = kCopyKeyLength;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < length; ++t) {
      int symbol = 0;
      if (t < kCopyKeyLength) {
        symbol = 1 + static_cast<int>(rng.below(8));
        out.targets.at(delay + kCopyKeyLength + t, b) = symbol;
      } else if (t >= delay + kCopyKeyLength) {
        symbol = kCopyMarker;
      }
      out.inputs.at(t, b, static_cast<std::size_t>(symbol)) = 1.0;
    }
  }
  return out;
}

double baseline_loss(TaskKind task, std::size_t seq_len) {
  switch (task) {
    case TaskKind::Adding: return 0.167;
    case TaskKind::CopyMemory:
      return static_cast<double>(kCopyKeyLength) * std::log(8.0) / static_cast<double>(seq_len + 2 * kCopyKeyLength);
    default: break;
  }
  throw ConfigError("no analytic baseline for task '" + to_string(task) + "'");
}

namespace {

std::uint32_t read_be32(std::istream& in, std::size_t offset, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw ParseError(path.string() + ": truncated header at offset " + std::to_string(offset));
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

std::string hex(std::uint32_t v) {
  std::ostringstream s;
  s << "0x" << std::hex;
  s.width(8);
  s.fill('0');
  s << v;
  return s.str();
}

}  // namespace

IdxArray read_idx(const std::filesystem::path& path, std::uint32_t expected_magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open IDX file " + path.string());
  const std::uint32_t magic = read_be32(in, 0, path);
  if (magic != expected_magic)
    throw ParseError(path.string() + ": bad magic " + hex(magic) + " at offset 0, expected " + hex(expected_magic));
  const std::size_t ndims = magic & 0xFF;
  IdxArray out;
  std::size_t total = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    const std::uint32_t extent = read_be32(in, 4 + 4 * d, path);
    out.dims.push_back(extent);
    total *= extent;
  }
  const std::size_t header = 4 + 4 * ndims;
  out.bytes.resize(total);
  in.read(reinterpret_cast<char*>(out.bytes.data()), static_cast<std::streamsize>(total));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != total)
    throw ParseError(path.string() + ": truncated payload at offset " + std::to_string(header + got) + ", expected " +
                     std::to_string(total) + " data bytes");
  return out;
}

void write_idx(const std::filesystem::path& path, const IdxArray& array) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write IDX file " + path.string());
  write_be32(out, 0x00000800u | static_cast<std::uint32_t>(array.dims.size()));
  for (auto d : array.dims) write_be32(out, d);
  out.write(reinterpret_cast<const char*>(array.bytes.data()), static_cast<std::streamsize>(array.bytes.size()));
  if (!out) throw IoError("failed writing IDX file " + path.string());
}

PixelDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const IdxArray img = read_idx(images, kIdxImagesMagic);
  const IdxArray lab = read_idx(labels, kIdxLabelsMagic);
  if (img.dims[0] != lab.dims[0])
    throw ParseError("image count " + std::to_string(img.dims[0]) + " in " + images.string() +
                     " does not match label count " + std::to_string(lab.dims[0]) + " in " + labels.string());
  if (img.dims[0] == 0 || img.dims[1] == 0 || img.dims[2] == 0) throw ParseError(images.string() + ": empty dataset");

  PixelDataset ds;
  ds.rows = img.dims[1];
  ds.cols = img.dims[2];
  const std::size_t count = img.dims[0];
  ds.images = Tensor({count, ds.rows * ds.cols});
  for (std::size_t i = 0; i < img.bytes.size(); ++i) ds.images[i] = img.bytes[i] / 255.0;
  ds.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (lab.bytes[i] > 9)
      throw ParseError(labels.string() + ": label " + std::to_string(lab.bytes[i]) + " out of range at offset " +
                       std::to_string(8 + i));
    ds.labels.push_back(lab.bytes[i]);
  }
  return ds;
}

std::vector<std::size_t> make_permutation(std::size_t n, std::optional<std::uint64_t> seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (!seed) return perm;
  Rng rng = Rng(*seed).derive("permutation");
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

std::vector<std::size_t> invert_permutation(std::span<const std::size_t> perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  return inv;
}

PixelDataset apply_permutation(const PixelDataset& dataset, std::span<const std::size_t> perm) {
  const std::size_t px = dataset.pixels();
  if (perm.size() != px)
    throw DimensionError("permutation has " + std::to_string(perm.size()) + " entries, images have " +
                         std::to_string(px) + " pixels");
  std::vector<bool> seen(px, false);
  for (auto p : perm) {
    if (p >= px || seen[p]) throw ConfigError("pixel permutation is not a bijection");
    seen[p] = true;
  }
  PixelDataset out = dataset;
  for (std::size_t i = 0; i < dataset.count(); ++i) {
    auto src = dataset.images.row(i);
    auto dst = out.images.row(i);
    for (std::size_t k = 0; k < px; ++k) dst[k] = src[perm[k]];
  }
  // Compose with any earlier permutation so `permutation` stays relative to raster order.
  if (dataset.permutation.empty()) {
    out.permutation.assign(perm.begin(), perm.end());
  } else {
    out.permutation.resize(px);
    for (std::size_t k = 0; k < px; ++k) out.permutation[k] = dataset.permutation[perm[k]];
  }
  return out;
}

PixelDataset apply_permutation(const PixelDataset& dataset, std::optional<std::uint64_t> seed) {
  const auto perm = make_permutation(dataset.pixels(), seed);
  return apply_permutation(dataset, perm);
}

PixelDataset downsample(const PixelDataset& dataset, std::size_t side) {
  if (side == 0) throw ConfigError("downsample side must be positive");
  if (!dataset.permutation.empty()) throw ConfigError("downsample must run before any pixel permutation");
  if (side == dataset.rows && side == dataset.cols) return dataset;

  // Overlap weights of each target cell with each source cell along one axis.
  auto weights = [](std::size_t src, std::size_t dst) {
    std::vector<std::vector<std::pair<std::size_t, double>>> w(dst);
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t i = 0; i < dst; ++i) {
      const double lo = i * scale, hi = (i + 1) * scale;
      for (std::size_t s = static_cast<std::size_t>(lo); s < src && s < hi; ++s) {
        const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
        if (overlap > 0) w[i].emplace_back(s, overlap / scale);
      }
    }
    return w;
  };
  const auto wr = weights(dataset.rows, side);
  const auto wc = weights(dataset.cols, side);

  PixelDataset out;
  out.rows = side;
  out.cols = side;
  out.labels = dataset.labels;
  out.images = Tensor({dataset.count(), side * side});
  for (std::size_t i = 0; i < dataset.count(); ++i) {
    auto src = dataset.images.row(i);
    auto dst = out.images.row(i);
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t c = 0; c < side; ++c) {
        double acc = 0;
        for (auto [sr, fr] : wr[r])
          for (auto [sc, fc] : wc[c]) acc += fr * fc * src[sr * dataset.cols + sc];
        dst[r * side + c] = std::clamp(acc, 0.0, 1.0);
      }
  }
  return out;
}

PixelDataset subset(const PixelDataset& dataset, std::size_t first, std::size_t count) {
  if (first + count > dataset.count()) throw ConfigError("dataset subset out of range");
  if (count == 0) throw ConfigError("dataset subset must be non-empty");
  PixelDataset out;
  out.rows = dataset.rows;
  out.cols = dataset.cols;
  out.permutation = dataset.permutation;
  out.images = Tensor({count, dataset.pixels()});
  for (std::size_t i = 0; i < count; ++i) {
    auto src = dataset.images.row(first + i);
    std::copy(src.begin(), src.end(), out.images.row(i).begin());
  }
  out.labels.assign(dataset.labels.begin() + static_cast<std::ptrdiff_t>(first),
                    dataset.labels.begin() + static_cast<std::ptrdiff_t>(first + count));
  return out;
}

TaskBatch make_pixel_batch(const PixelDataset& dataset, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ConfigError("pixel batch needs at least one index");
  const std::size_t T = dataset.pixels(), B = indices.size();
  TaskBatch out;
  out.inputs = Tensor({T, B, 1});
  out.targets = Tensor({B});
  out.loss = LossKind::CrossEntropyMean;
  out.seq_len = T;
  for (std::size_t b = 0; b < B; ++b) {
    if (indices[b] >= dataset.count()) throw ConfigError("pixel batch index out of range");
    auto img = dataset.images.row(indices[b]);
    for (std::size_t t = 0; t < T; ++t) out.inputs.at(t, b, 0) = img[t];
    out.targets[b] = dataset.labels[indices[b]];
  }
  return out;
}

}  // namespace celif
