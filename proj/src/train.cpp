#include "celif/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "celif/error.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace celif {

namespace fs = std::filesystem;

bool mnist_available(const fs::path& root) {
  if (root.empty()) return false;
  for (const char* name : {kMnistTrainImages, kMnistTrainLabels, kMnistTestImages, kMnistTestLabels})
    if (!fs::is_regular_file(root / name)) return false;
  return true;
}

namespace {

PixelDataset prepare(PixelDataset ds, const RunConfig& c, std::size_t limit) {
  if (limit > 0 && limit < ds.count()) ds = subset(ds, 0, limit);
  if (c.image_side != ds.rows || c.image_side != ds.cols) ds = downsample(ds, c.image_side);
  if (c.task == TaskKind::PsMnist) ds = apply_permutation(ds, std::optional<std::uint64_t>(c.permutation_seed));
  return ds;
}

bool is_pixel(TaskKind t) { return t == TaskKind::SeqMnist || t == TaskKind::PsMnist; }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

class CsvLog {
 public:
  CsvLog(const fs::path& path, bool append) {
    const bool fresh = !append || !fs::exists(path) || fs::file_size(path) == 0;
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw IoError("cannot write " + path.string());
    if (fresh) out_ << "iteration,wall_ms,loss,accuracy_or_mse\n";
  }
  void row(std::uint64_t it, std::int64_t wall_ms, double loss, double metric) {
    out_ << it << ',' << wall_ms << ',' << fmt(loss) << ',' << fmt(metric) << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

Evaluation evaluate_pixels(const Model& model, const PixelDataset& ds, std::size_t chunk) {
  double loss = 0, correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t first = 0; first < ds.count(); first += chunk) {
    const std::size_t n = std::min(chunk, ds.count() - first);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), first);
    const Evaluation e = evaluate_batch(model, make_pixel_batch(ds, idx));
    loss += e.loss * static_cast<double>(n);
    correct += e.metric * static_cast<double>(n);
  }
  const double total = static_cast<double>(ds.count());
  return {loss / total, correct / total};
}

}  // namespace

PixelData load_pixel_data(const RunConfig& c) {
  const fs::path root = data_root(c);
  if (root.empty())
    throw ConfigError("pixel tasks need a data root (config key data_root or $CELIF_DATA_ROOT)");
  if (!mnist_available(root))
    throw IoError("MNIST IDX files not found under " + root.string() + " (expected " + kMnistTrainImages + ", " +
                  kMnistTrainLabels + ", " + kMnistTestImages + ", " + kMnistTestLabels + ")");
  PixelData data;
  data.train = prepare(load_idx(root / kMnistTrainImages, root / kMnistTrainLabels), c, c.train_limit);
  data.test = prepare(load_idx(root / kMnistTestImages, root / kMnistTestLabels), c, c.test_limit);
  return data;
}

TaskBatch synthetic_batch(const RunConfig& c, const Rng& root, std::string_view purpose, std::uint64_t index,
                          std::size_t batch) {
  Rng rng = root.derive(purpose, index);
  switch (c.task) {
    case TaskKind::Adding: return gen_adding(c.seq_len, batch, rng);
    case TaskKind::CopyMemory: return gen_copy_memory(c.seq_len, batch, rng);
    default: throw ConfigError("task " + to_string(c.task) + " is not synthetic");
  }
}

Evaluation evaluate_model(const Model& model, const RunConfig& c) {
  if (is_pixel(c.task)) {
    const PixelData data = load_pixel_data(c);
    return evaluate_pixels(model, data.test, c.eval_batch);
  }
  return evaluate_batch(model, synthetic_batch(c, Rng(c.seed), "eval", 0, c.eval_batch));
}

Evaluation evaluate_checkpoint(const fs::path& checkpoint) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  return evaluate_model(restore_model(ck), parse_config(ck.config_text));
}

TrainResult train(const RunConfig& config, std::ostream* log) {
  validate(config);
#if defined(__GLIBC__)
  // Keep trace buffers on the heap between iterations.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  const fs::path out = config.out_dir;
  fs::create_directories(out);
  {
    std::ofstream cfg(out / "config.txt", std::ios::trunc);
    if (!cfg) throw IoError("cannot write " + (out / "config.txt").string());
    cfg << config_to_text(config);
  }

  const Rng root(config.seed);
  const ModelSpec spec = model_spec(config);
  Model model;
  AdamState adam;
  adam.config = adam_config(config);
  std::uint64_t start = 0;
  if (!config.resume.empty()) {
    const Checkpoint ck = read_checkpoint(config.resume);
    model = restore_model(ck);
    if (model.parameter_count() != parameter_count(spec))
      throw CheckpointError("checkpoint " + config.resume + " does not match the configured model");
    restore_adam(ck, model, adam);
    start = ck.iteration;
  } else {
    model = init_model(spec, root, InitOptions{config.te_mean, config.te_std});
  }

  std::optional<PixelData> pixels;
  std::size_t per_epoch = 0;
  std::uint64_t total = config.iterations;
  if (is_pixel(config.task)) {
    pixels = load_pixel_data(config);
    per_epoch = (pixels->train.count() + config.batch_size - 1) / config.batch_size;
    total = per_epoch * config.epochs;
  }

  const bool append = !config.resume.empty();
  CsvLog metrics(out / "metrics.csv", append);
  CsvLog evals(out / "eval.csv", append);
  const auto t0 = std::chrono::steady_clock::now();
  auto wall_ms = [&]() -> std::int64_t {
    if (!config.wall_clock) return 0;
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  };
  const fs::path ckpt_path = out / "model.ckpt";
  auto save = [&](const fs::path& path, std::uint64_t it) {
    write_checkpoint(path, make_checkpoint(config, model, &adam, it));
  };

  std::optional<TaskBatch> eval_fixed;
  if (!pixels) eval_fixed = synthetic_batch(config, root, "eval", 0, config.eval_batch);
  auto run_eval = [&]() { return pixels ? evaluate_pixels(model, pixels->test, config.eval_batch) : evaluate_batch(model, *eval_fixed); };
  auto targets_met = [&](const Evaluation& e) {
    if (!config.target_loss && !config.target_metric) return false;
    if (config.target_loss && !(e.loss < *config.target_loss)) return false;
    if (config.target_metric && !(e.metric > *config.target_metric)) return false;
    return true;
  };

  TrainResult result;
  result.checkpoint = ckpt_path;
  std::vector<std::size_t> order, idx;
  std::size_t order_epoch = static_cast<std::size_t>(-1);

  std::uint64_t it = start;
  while (it < total) {
    TaskBatch batch;
    if (pixels) {
      const std::size_t epoch = it / per_epoch, pos = it % per_epoch;
      if (epoch != order_epoch) {
        order = make_permutation(pixels->train.count(), root.derive("shuffle", epoch).next_u64());
        order_epoch = epoch;
      }
      const std::size_t first = pos * config.batch_size;
      const std::size_t n = std::min(config.batch_size, order.size() - first);
      idx.assign(order.begin() + static_cast<std::ptrdiff_t>(first),
                 order.begin() + static_cast<std::ptrdiff_t>(first + n));
      batch = make_pixel_batch(pixels->train, idx);
    } else {
      batch = synthetic_batch(config, root, "data", it, config.batch_size);
    }

    auto diverged = [&](const std::string& what) {
      save(out / "diverged.ckpt", it);
      return TrainingError(what + " at iteration " + std::to_string(it + 1) + "; model saved to " +
                           (out / "diverged.ckpt").string());
    };
    LossResult lr;
    try {
      lr = loss_and_grad(model, batch);
    } catch (const DynamicsError& e) {
      throw diverged(e.what());
    } catch (const GradientError& e) {
      throw diverged(e.what());
    }
    if (!std::isfinite(lr.loss)) throw diverged("non-finite loss");
    if (config.clip_norm > 0) {
      auto grads = gradient_tensors(lr.grads);
      clip_grad_norm(grads, config.clip_norm);
    }
    try {
      adam_step(param_refs(model, lr.grads), adam);
    } catch (const TrainingError& e) {
      throw diverged(e.what());
    }
    ++it;
    result.last_loss = lr.loss;
    result.last_metric = lr.metric;

    if (it % config.log_interval == 0 || it == total) {
      metrics.row(it, wall_ms(), lr.loss, lr.metric);
      if (log) *log << "iter " << it << " loss " << fmt(lr.loss) << " metric " << fmt(lr.metric) << '\n';
    }
    const bool eval_now = pixels ? (it % per_epoch == 0) : (it % config.eval_interval == 0 || it == total);
    if (eval_now) {
      const Evaluation e = run_eval();
      result.last_eval = e;
      evals.row(it, wall_ms(), e.loss, e.metric);
      if (log) *log << "eval " << it << " loss " << fmt(e.loss) << " metric " << fmt(e.metric) << '\n';
      if (targets_met(e)) {
        result.early_stopped = true;
        break;
      }
    }
    if (config.checkpoint_interval > 0 && it % config.checkpoint_interval == 0) save(ckpt_path, it);
  }

  result.iterations = it;
  save(ckpt_path, it);
  std::ofstream summary(out / "summary.txt", std::ios::trunc);
  summary << "iterations = " << it << "\n"
          << "parameters = " << model.parameter_count() << "\n"
          << "train_loss = " << fmt(result.last_loss) << "\n"
          << "train_metric = " << fmt(result.last_metric) << "\n";
  if (result.last_eval)
    summary << "eval_loss = " << fmt(result.last_eval->loss) << "\n"
            << "eval_metric = " << fmt(result.last_eval->metric) << "\n";
  summary << "early_stopped = " << (result.early_stopped ? "true" : "false") << "\n";
  return result;
}

GradProbeRecord probe_gradients(const Model& model, const RunConfig& c, std::size_t layer) {
  if (layer >= model.layers.size())
    throw ConfigError("probe layer " + std::to_string(layer) + " out of range (model has " +
                      std::to_string(model.layers.size()) + " hidden layers)");
  const Rng root(c.seed);
  TaskBatch batch;
  if (is_pixel(c.task)) {
    const PixelData data = load_pixel_data(c);
    Rng pick = root.derive("probe");
    const std::size_t n = std::min(c.probe_batch, data.train.count());
    auto perm = make_permutation(data.train.count(), pick.next_u64());
    perm.resize(n);
    batch = make_pixel_batch(data.train, perm);
  } else {
    batch = synthetic_batch(c, root, "probe", 0, c.probe_batch);
  }
  const LossResult lr = loss_and_grad(model, batch, LossOptions{layer});
  const Tensor& p = lr.probe;
  const std::size_t T = p.dim(0), B = p.dim(1), n = p.dim(2);

  GradProbeRecord rec;
  rec.layer = layer;
  rec.grad = Tensor({T, n});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < n; ++j) rec.grad.at(t, j) += std::abs(p.at(t, b, j));
  for (std::size_t i = 0; i < rec.grad.size(); ++i) rec.raw_total += rec.grad[i];
  if (rec.raw_total > 0)
    for (std::size_t i = 0; i < rec.grad.size(); ++i) rec.grad[i] /= rec.raw_total;
  rec.step_sums.assign(T, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < n; ++j) rec.step_sums[t] += rec.grad.at(t, j);
  return rec;
}

GradProbeRecord probe_gradients(const fs::path& checkpoint, std::size_t layer) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  return probe_gradients(restore_model(ck), parse_config(ck.config_text), layer);
}

Tensor cosine_similarity_rows(const Tensor& te) {
  if (te.rank() != 2) throw DimensionError("cosine similarity needs a rank-2 tensor, got " + shape_string(te.shape()));
  const std::size_t T = te.dim(0), n = te.dim(1);
  std::vector<double> norm(T, 0.0);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < n; ++j) norm[i] += te.at(i, j) * te.at(i, j);
    norm[i] = std::sqrt(norm[i]);
  }
  Tensor sim({T, T});
  for (std::size_t a = 0; a < T; ++a)
    for (std::size_t b = a; b < T; ++b) {
      double v = 0;
      if (norm[a] > 0 && norm[b] > 0) {
        for (std::size_t j = 0; j < n; ++j) v += te.at(a, j) * te.at(b, j);
        v /= norm[a] * norm[b];
      }
      sim.at(a, b) = v;
      sim.at(b, a) = v;
    }
  return sim;
}

Tensor te_similarity(const Model& model, std::size_t layer) {
  if (layer >= model.layers.size())
    throw ConfigError("layer " + std::to_string(layer) + " out of range (model has " +
                      std::to_string(model.layers.size()) + " hidden layers)");
  const Tensor* te = model.encoding_for(layer);
  if (!te) throw ConfigError("layer " + std::to_string(layer) + " has no temporal encoding");
  const std::size_t n = model.spec.hidden_dims[layer];
  if (te->dim(1) == n) return cosine_similarity_rows(*te);
  Tensor cols({te->dim(0), n});
  for (std::size_t t = 0; t < te->dim(0); ++t)
    for (std::size_t j = 0; j < n; ++j) cols.at(t, j) = te->at(t, j);
  return cosine_similarity_rows(cols);
}

Tensor te_similarity(const fs::path& checkpoint, std::size_t layer) {
  return te_similarity(restore_model(read_checkpoint(checkpoint)), layer);
}

std::vector<double> similarity_by_lag(const Tensor& sim, std::size_t max_lag) {
  const std::size_t T = sim.dim(0);
  std::vector<double> out;
  for (std::size_t lag = 0; lag <= max_lag && lag < T; ++lag) {
    double s = 0;
    for (std::size_t i = 0; i + lag < T; ++i) s += sim.at(i, i + lag);
    out.push_back(s / static_cast<double>(T - lag));
  }
  return out;
}

void write_matrix_csv(const fs::path& path, const Tensor& m) {
  if (m.rank() != 2) throw DimensionError("CSV export needs a rank-2 tensor");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t j = 0; j < m.dim(1); ++j) out << (j ? ",c" : "c") << j;
  out << '\n';
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    for (std::size_t j = 0; j < m.dim(1); ++j) out << (j ? "," : "") << fmt(m.at(i, j));
    out << '\n';
  }
}

void write_probe_csv(const fs::path& dir, const GradProbeRecord& rec) {
  write_matrix_csv(dir / "grad_probe.csv", rec.grad);
  std::ofstream out(dir / "grad_probe_steps.csv", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "grad_probe_steps.csv").string());
  out << "t,sum\n";
  for (std::size_t t = 0; t < rec.step_sums.size(); ++t) out << t + 1 << ',' << fmt(rec.step_sums[t]) << '\n';
}

}  // namespace celif

namespace celif {

PixelData synthetic_pixel_data(std::size_t train_count, std::size_t test_count, std::size_t side, const Rng& rng) {
  if (train_count == 0 || test_count == 0 || side == 0) throw ConfigError("synthetic pixel data needs positive sizes");
  Rng proto_rng = rng.derive("data", 0);
  const std::size_t px = side * side;
  Tensor protos = uniform_fill(proto_rng, 0.0, 1.0, {10, px});
  auto make = [&](std::size_t count, std::uint64_t stream) {
    Rng r = rng.derive("data", stream);
    PixelDataset ds;
    ds.rows = ds.cols = side;
    ds.images = Tensor({count, px});
    for (std::size_t i = 0; i < count; ++i) {
      const int label = static_cast<int>(r.below(10));
      ds.labels.push_back(label);
      for (std::size_t p = 0; p < px; ++p) {
        const double v = protos.at(static_cast<std::size_t>(label), p) + 0.3 * r.normal();
        // Quantise to bytes so the IDX round trip is exact.
        ds.images.at(i, p) = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
      }
    }
    return ds;
  };
  return {make(train_count, 1), make(test_count, 2)};
}

void write_pixel_idx(const fs::path& dir, const PixelData& data) {
  fs::create_directories(dir);
  auto write = [&](const PixelDataset& ds, const char* images, const char* labels) {
    IdxArray img{{static_cast<std::uint32_t>(ds.count()), static_cast<std::uint32_t>(ds.rows),
                  static_cast<std::uint32_t>(ds.cols)},
                 {}};
    img.bytes.reserve(ds.images.size());
    for (std::size_t i = 0; i < ds.images.size(); ++i)
      img.bytes.push_back(static_cast<std::uint8_t>(std::lround(ds.images[i] * 255.0)));
    IdxArray lab{{static_cast<std::uint32_t>(ds.count())}, {}};
    for (int l : ds.labels) lab.bytes.push_back(static_cast<std::uint8_t>(l));
    write_idx(dir / images, img);
    write_idx(dir / labels, lab);
  };
  write(data.train, kMnistTrainImages, kMnistTrainLabels);
  write(data.test, kMnistTestImages, kMnistTestLabels);
}

void write_batch_csv(const fs::path& dir, const TaskBatch& batch) {
  fs::create_directories(dir);
  std::ofstream in(dir / "inputs.csv", std::ios::trunc);
  if (!in) throw IoError("cannot write " + (dir / "inputs.csv").string());
  const std::size_t T = batch.inputs.dim(0), B = batch.inputs.dim(1), F = batch.inputs.dim(2);
  in << "t,sample";
  for (std::size_t f = 0; f < F; ++f) in << ",f" << f;
  in << '\n';
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t b = 0; b < B; ++b) {
      in << t + 1 << ',' << b;
      for (std::size_t f = 0; f < F; ++f) in << ',' << fmt(batch.inputs.at(t, b, f));
      in << '\n';
    }
  std::ofstream tg(dir / "targets.csv", std::ios::trunc);
  if (!tg) throw IoError("cannot write " + (dir / "targets.csv").string());
  const Tensor& y = batch.targets;
  if (y.rank() == 2 && batch.loss == LossKind::CrossEntropyPerStep) {
    tg << "t,sample,target\n";
    for (std::size_t t = 0; t < y.dim(0); ++t)
      for (std::size_t b = 0; b < y.dim(1); ++b) tg << t + 1 << ',' << b << ',' << fmt(y.at(t, b)) << '\n';
  } else {
    tg << "sample,target\n";
    const std::size_t per = y.size() / B;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < per; ++k) tg << b << ',' << fmt(y[b * per + k]) << '\n';
  }
}

}  // namespace celif
