#include "celif.h"

#include <cstring>
#include <iostream>
#include <string>
#include <vector>

#include "celif/checkpoint.hpp"
#include "celif/config.hpp"
#include "celif/energy.hpp"
#include "celif/error.hpp"
#include "celif/train.hpp"

struct celif_config {
  celif::RunConfig value;
};

struct celif_model {
  celif::RunConfig config;
  celif::Model model;
};

namespace {

thread_local std::string g_last_error;

celif_status fail(celif_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <class Fn>
celif_status guard(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const celif::DimensionError& e) {
    return fail(CELIF_ERR_DIMENSION, e.what());
  } catch (const celif::ConfigError& e) {
    return fail(CELIF_ERR_CONFIG, e.what());
  } catch (const celif::DynamicsError& e) {
    return fail(CELIF_ERR_DYNAMICS, e.what());
  } catch (const celif::GradientError& e) {
    return fail(CELIF_ERR_GRADIENT, e.what());
  } catch (const celif::TrainingError& e) {
    return fail(CELIF_ERR_TRAINING, e.what());
  } catch (const celif::ParseError& e) {
    return fail(CELIF_ERR_PARSE, e.what());
  } catch (const celif::CheckpointError& e) {
    return fail(CELIF_ERR_CHECKPOINT, e.what());
  } catch (const celif::IoError& e) {
    return fail(CELIF_ERR_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(CELIF_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(CELIF_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(CELIF_ERR_INTERNAL, "unknown exception");
  }
}

celif_status copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (!buf || cap < s.size() + 1) return fail(CELIF_ERR_BUFFER, "output buffer too small");
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return CELIF_OK;
}

#define CELIF_REQUIRE(cond, what) \
  if (!(cond)) return fail(CELIF_ERR_ARGUMENT, what)

}  // namespace

extern "C" {

const char* celif_version(void) { return "1.0.0"; }

const char* celif_status_name(celif_status status) {
  switch (status) {
    case CELIF_OK: return "ok";
    case CELIF_ERR_ARGUMENT: return "invalid argument";
    case CELIF_ERR_DIMENSION: return "dimension error";
    case CELIF_ERR_CONFIG: return "configuration error";
    case CELIF_ERR_DYNAMICS: return "dynamics error";
    case CELIF_ERR_GRADIENT: return "gradient error";
    case CELIF_ERR_TRAINING: return "training error";
    case CELIF_ERR_PARSE: return "parse error";
    case CELIF_ERR_CHECKPOINT: return "checkpoint error";
    case CELIF_ERR_IO: return "I/O error";
    case CELIF_ERR_BUFFER: return "buffer too small";
    case CELIF_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* celif_last_error(void) { return g_last_error.c_str(); }

celif_status celif_config_new(celif_config** out) {
  CELIF_REQUIRE(out, "out is NULL");
  return guard([&] {
    *out = new celif_config{};
    return CELIF_OK;
  });
}

celif_status celif_config_parse(const char* text, celif_config** out) {
  CELIF_REQUIRE(text && out, "text or out is NULL");
  return guard([&] {
    *out = new celif_config{celif::parse_config(text)};
    return CELIF_OK;
  });
}

celif_status celif_config_load(const char* path, celif_config** out) {
  CELIF_REQUIRE(path && out, "path or out is NULL");
  return guard([&] {
    *out = new celif_config{celif::load_config(path)};
    return CELIF_OK;
  });
}

void celif_config_free(celif_config* config) { delete config; }

celif_status celif_config_set(celif_config* config, const char* key, const char* value) {
  CELIF_REQUIRE(config && key && value, "config, key or value is NULL");
  return guard([&] {
    celif::apply_setting(config->value, key, value);
    return CELIF_OK;
  });
}

celif_status celif_config_get(const celif_config* config, const char* key, char* buf, size_t cap, size_t* needed) {
  CELIF_REQUIRE(config && key, "config or key is NULL");
  return guard([&] { return copy_out(celif::config_value(config->value, key), buf, cap, needed); });
}

celif_status celif_config_text(const celif_config* config, char* buf, size_t cap, size_t* needed) {
  CELIF_REQUIRE(config, "config is NULL");
  return guard([&] { return copy_out(celif::config_to_text(config->value), buf, cap, needed); });
}

celif_status celif_config_validate(const celif_config* config) {
  CELIF_REQUIRE(config, "config is NULL");
  return guard([&] {
    celif::validate(config->value);
    return CELIF_OK;
  });
}

size_t celif_config_key_count(void) { return celif::config_keys().size(); }

const char* celif_config_key_name(size_t index) {
  static const std::vector<std::string> keys = celif::config_keys();
  return index < keys.size() ? keys[index].c_str() : nullptr;
}

celif_status celif_train(const celif_config* config, int verbose, celif_train_result* result) {
  CELIF_REQUIRE(config, "config is NULL");
  return guard([&] {
    const celif::TrainResult r = celif::train(config->value, verbose ? &std::cerr : nullptr);
    if (result) {
      *result = {};
      result->iterations = r.iterations;
      result->last_loss = r.last_loss;
      result->last_metric = r.last_metric;
      result->has_eval = r.last_eval.has_value();
      if (r.last_eval) {
        result->eval_loss = r.last_eval->loss;
        result->eval_metric = r.last_eval->metric;
      }
      result->early_stopped = r.early_stopped;
    }
    return CELIF_OK;
  });
}

celif_status celif_model_init(const celif_config* config, celif_model** out) {
  CELIF_REQUIRE(config && out, "config or out is NULL");
  return guard([&] {
    const celif::RunConfig& c = config->value;
    celif::validate(c);
    auto* m = new celif_model{c, celif::init_model(celif::model_spec(c), celif::Rng(c.seed),
                                                   celif::InitOptions{c.te_mean, c.te_std})};
    *out = m;
    return CELIF_OK;
  });
}

celif_status celif_model_load(const char* path, celif_model** out) {
  CELIF_REQUIRE(path && out, "path or out is NULL");
  return guard([&] {
    const celif::Checkpoint ck = celif::read_checkpoint(path);
    *out = new celif_model{celif::parse_config(ck.config_text), celif::restore_model(ck)};
    return CELIF_OK;
  });
}

celif_status celif_model_save(const celif_model* model, const char* path) {
  CELIF_REQUIRE(model && path, "model or path is NULL");
  return guard([&] {
    celif::Model copy = model->model;
    celif::write_checkpoint(path, celif::make_checkpoint(model->config, copy, nullptr, 0));
    return CELIF_OK;
  });
}

void celif_model_free(celif_model* model) { delete model; }

celif_status celif_model_parameter_count(const celif_model* model, uint64_t* out) {
  CELIF_REQUIRE(model && out, "model or out is NULL");
  *out = model->model.parameter_count();
  return CELIF_OK;
}

celif_status celif_model_layer_count(const celif_model* model, size_t* out) {
  CELIF_REQUIRE(model && out, "model or out is NULL");
  *out = model->model.layers.size();
  return CELIF_OK;
}

celif_status celif_model_seq_len(const celif_model* model, size_t* out) {
  CELIF_REQUIRE(model && out, "model or out is NULL");
  *out = model->model.spec.seq_len;
  return CELIF_OK;
}

celif_status celif_model_config(const celif_model* model, celif_config** out) {
  CELIF_REQUIRE(model && out, "model or out is NULL");
  return guard([&] {
    *out = new celif_config{model->config};
    return CELIF_OK;
  });
}

celif_status celif_model_set(celif_model* model, const char* key, const char* value) {
  CELIF_REQUIRE(model && key && value, "model, key or value is NULL");
  return guard([&] {
    celif::RunConfig next = model->config;
    celif::apply_setting(next, key, value);
    const celif::ModelSpec a = celif::model_spec(model->config), b = celif::model_spec(next);
    if (a.hidden_dims != b.hidden_dims || a.seq_len != b.seq_len || a.input_dim != b.input_dim ||
        a.output_dim != b.output_dim || a.readout != b.readout || a.connectivity != b.connectivity ||
        a.te_sharing != b.te_sharing || a.neuron.kind != b.neuron.kind || a.neuron.variant != b.neuron.variant)
      throw celif::ConfigError(std::string("key '") + key + "' would change the model architecture");
    model->config = next;
    model->model.spec = b;
    return CELIF_OK;
  });
}

celif_status celif_model_evaluate(const celif_model* model, double* loss, double* metric) {
  CELIF_REQUIRE(model, "model is NULL");
  return guard([&] {
    const celif::Evaluation e = celif::evaluate_model(model->model, model->config);
    if (loss) *loss = e.loss;
    if (metric) *metric = e.metric;
    return CELIF_OK;
  });
}

celif_status celif_probe_gradients(const celif_model* model, size_t layer, const char* out_dir, double* step_sums,
                                   size_t cap, size_t* steps, double* raw_total) {
  CELIF_REQUIRE(model, "model is NULL");
  return guard([&] {
    const celif::GradProbeRecord rec = celif::probe_gradients(model->model, model->config, layer);
    if (out_dir) celif::write_probe_csv(out_dir, rec);
    if (steps) *steps = rec.step_sums.size();
    if (raw_total) *raw_total = rec.raw_total;
    if (step_sums)
      for (size_t t = 0; t < cap && t < rec.step_sums.size(); ++t) step_sums[t] = rec.step_sums[t];
    return CELIF_OK;
  });
}

celif_status celif_te_similarity(const celif_model* model, size_t layer, const char* csv_path, double* lag_means,
                                 size_t cap, size_t* steps) {
  CELIF_REQUIRE(model, "model is NULL");
  return guard([&] {
    const celif::Tensor sim = celif::te_similarity(model->model, layer);
    if (csv_path) celif::write_matrix_csv(csv_path, sim);
    if (steps) *steps = sim.dim(0);
    if (lag_means && cap > 0) {
      const auto lags = celif::similarity_by_lag(sim, cap - 1);
      for (size_t i = 0; i < lags.size(); ++i) lag_means[i] = lags[i];
    }
    return CELIF_OK;
  });
}

celif_status celif_energy(const char* family, const celif_energy_layer* layers, size_t count,
                          const celif_energy_layer* readout, size_t timesteps, double e_ac_pj, double e_mac_pj,
                          double* layer_pj, celif_energy_report* report) {
  CELIF_REQUIRE(family && report && (layers || count == 0), "family, layers or report is NULL");
  return guard([&] {
    celif::EnergySpec spec;
    spec.family = celif::model_family_from_string(family);
    for (size_t i = 0; i < count; ++i) spec.layers.push_back({layers[i].m, layers[i].n, layers[i].fr_in, layers[i].fr_out});
    if (readout) spec.readout = celif::EnergyReadout{readout->m, readout->n, readout->fr_in};
    spec.timesteps = timesteps;
    spec.e_ac_pj = e_ac_pj;
    spec.e_mac_pj = e_mac_pj;
    const celif::EnergyReport r = celif::estimate_energy(spec);
    report->per_step_pj = r.per_step_pj;
    report->readout_pj = r.readout_pj;
    report->total_nj = r.total_nj;
    if (layer_pj)
      for (size_t i = 0; i < count; ++i) layer_pj[i] = r.layer_pj[i];
    return CELIF_OK;
  });
}

size_t celif_energy_reference_count(void) { return celif::reference_models().size(); }

celif_status celif_energy_reference(size_t index, size_t timesteps, double e_ac_pj, double e_mac_pj,
                                    const char** family, celif_energy_report* report, double* reported_nj) {
  CELIF_REQUIRE(family && report, "family or report is NULL");
  return guard([&] {
    const auto models = celif::reference_models(timesteps, e_ac_pj, e_mac_pj);
    if (index >= models.size()) throw celif::ConfigError("reference model index out of range");
    static const char* const names[] = {"lstm", "lif", "alif", "celif"};
    const auto& m = models[index];
    const celif::EnergyReport r = celif::estimate_energy(m.spec);
    *family = names[static_cast<int>(m.spec.family)];
    report->per_step_pj = r.per_step_pj;
    report->readout_pj = r.readout_pj;
    report->total_nj = r.total_nj;
    if (reported_nj) *reported_nj = m.reported_nj;
    return CELIF_OK;
  });
}

celif_status celif_gen_data(const celif_config* config, size_t count, const char* out_dir) {
  CELIF_REQUIRE(config && out_dir && count > 0, "config or out_dir is NULL, or count is 0");
  return guard([&] {
    const celif::RunConfig& c = config->value;
    const celif::Rng rng(c.seed);
    if (c.task == celif::TaskKind::SeqMnist || c.task == celif::TaskKind::PsMnist) {
      const size_t test = count / 5 > 0 ? count / 5 : 1;
      celif::write_pixel_idx(out_dir, celif::synthetic_pixel_data(count, test, c.image_side, rng));
    } else {
      celif::validate(c);
      celif::write_batch_csv(out_dir, celif::synthetic_batch(c, rng, "data", 0, count));
    }
    return CELIF_OK;
  });
}

celif_status celif_baseline_loss(const char* task, size_t seq_len, double* out) {
  CELIF_REQUIRE(task && out, "task or out is NULL");
  return guard([&] {
    *out = celif::baseline_loss(celif::task_kind_from_string(task), seq_len);
    return CELIF_OK;
  });
}

celif_status celif_eval_checkpoint(const char* path, double* loss, double* metric) {
  CELIF_REQUIRE(path, "path is NULL");
  return guard([&] {
    const celif::Evaluation e = celif::evaluate_checkpoint(path);
    if (loss) *loss = e.loss;
    if (metric) *metric = e.metric;
    return CELIF_OK;
  });
}

celif_status celif_checkpoint_describe(const char* path, char* buf, size_t cap, size_t* needed) {
  CELIF_REQUIRE(path, "path is NULL");
  return guard([&] { return copy_out(celif::describe_checkpoint(celif::read_checkpoint(path)), buf, cap, needed); });
}

}  // extern "C"
