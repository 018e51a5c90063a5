// Command-line front end. Talks to the engine only through the C API.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "celif.h"

namespace {

struct CliError {
  int code;
  std::string message;
};

void check(celif_status status, const std::string& what) {
  if (status != CELIF_OK) {
    std::string detail = celif_last_error();
    throw CliError{static_cast<int>(status) + 1,
                   what + ": " + celif_status_name(status) + (detail.empty() ? "" : " (" + detail + ")")};
  }
}

using ConfigPtr = std::unique_ptr<celif_config, decltype(&celif_config_free)>;
using ModelPtr = std::unique_ptr<celif_model, decltype(&celif_model_free)>;

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

// --config, then one --<key> flag per config key, then --set key=value.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key = value config file")->check(CLI::ExistingFile);
    for (size_t i = 0; i < celif_config_key_count(); ++i) {
      const std::string key = celif_config_key_name(i);
      app->add_option("--" + dashed(key), values[key], "override config key " + key);
    }
    app->add_option("--set", sets, "override any config key (key=value, repeatable)");
  }

  ConfigPtr build(const CLI::App* app) const {
    celif_config* raw = nullptr;
    if (file.empty()) check(celif_config_new(&raw), "creating config");
    else check(celif_config_load(file.c_str(), &raw), "loading " + file);
    ConfigPtr cfg(raw, celif_config_free);
    for (const auto& [key, value] : values)
      if (app->count("--" + dashed(key)) > 0) check(celif_config_set(cfg.get(), key.c_str(), value.c_str()), "--" + dashed(key));
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw CliError{2, "--set expects key=value, got '" + kv + "'"};
      check(celif_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set " + kv);
    }
    return cfg;
  }
};

std::string config_get(const celif_config* cfg, const char* key) {
  size_t needed = 0;
  celif_config_get(cfg, key, nullptr, 0, &needed);
  std::string buf(needed, '\0');
  check(celif_config_get(cfg, key, buf.data(), buf.size(), &needed), std::string("reading ") + key);
  buf.resize(needed - 1);
  return buf;
}

ModelPtr load_model(const std::string& path) {
  celif_model* raw = nullptr;
  check(celif_model_load(path.c_str(), &raw), "loading " + path);
  return ModelPtr(raw, celif_model_free);
}

size_t resolve_layer(const celif_model* model, int layer) {
  size_t count = 0;
  check(celif_model_layer_count(model, &count), "reading layer count");
  if (layer < 0) return count - 1;
  return static_cast<size_t>(layer);
}

std::filesystem::path sibling_dir(const std::string& checkpoint, const std::string& out_dir) {
  if (!out_dir.empty()) return out_dir;
  const std::filesystem::path p(checkpoint);
  return p.has_parent_path() ? p.parent_path() : std::filesystem::path(".");
}

// m:n:fr_in:fr_out
celif_energy_layer parse_layer(const std::string& text) {
  celif_energy_layer l{};
  std::istringstream in(text);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(in, part, ':')) parts.push_back(part);
  if (parts.size() < 2 || parts.size() > 4) throw CliError{2, "energy layer must be m:n[:fr_in[:fr_out]], got '" + text + "'"};
  try {
    l.m = std::stoul(parts[0]);
    l.n = std::stoul(parts[1]);
    l.fr_in = parts.size() > 2 ? std::stod(parts[2]) : 0.0;
    l.fr_out = parts.size() > 3 ? std::stod(parts[3]) : 0.0;
  } catch (const std::exception&) {
    throw CliError{2, "cannot parse energy layer '" + text + "'"};
  }
  return l;
}

celif_energy_report run_energy(const char* family, const std::vector<celif_energy_layer>& layers,
                               const celif_energy_layer* readout, size_t T, double e_ac, double e_mac) {
  celif_energy_report r{};
  std::vector<double> per(layers.size());
  check(celif_energy(family, layers.data(), layers.size(), readout, T, e_ac, e_mac, per.data(), &r), "energy");
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CE-LIF spiking sequence models: training, analysis and energy estimates"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(celif_version()));

  // train
  auto* train = app.add_subcommand("train", "train a model; writes metrics, eval log and checkpoints to out_dir");
  ConfigFlags train_flags;
  train_flags.attach(train);
  bool quiet = false;
  train->add_flag("--quiet", quiet, "suppress progress lines");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on its held-out data");
  std::string eval_ckpt;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  std::vector<std::string> eval_sets;
  eval->add_option("--set", eval_sets, "override a stored config key (key=value), e.g. data_root");

  // probe-grad
  auto* probe = app.add_subcommand("probe-grad", "normalised |dL/dS| of one hidden layer over time");
  std::string probe_ckpt, probe_out;
  int probe_layer = -1;
  std::vector<std::string> probe_sets;
  probe->add_option("--checkpoint", probe_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  probe->add_option("--layer", probe_layer, "hidden layer, 0-based (default: last)");
  probe->add_option("--out-dir", probe_out, "where to write grad_probe*.csv (default: next to checkpoint)");
  probe->add_option("--set", probe_sets, "override a stored config key (key=value)");

  // te-sim
  auto* tesim = app.add_subcommand("te-sim", "cosine similarity between temporal-encoding rows");
  std::string te_ckpt, te_out;
  int te_layer = -1;
  size_t te_lags = 30;
  tesim->add_option("--checkpoint", te_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  tesim->add_option("--layer", te_layer, "hidden layer, 0-based (default: last)");
  tesim->add_option("--out-dir", te_out, "where to write te_similarity.csv (default: next to checkpoint)");
  tesim->add_option("--max-lag", te_lags, "print mean similarity for lags up to this value");

  // energy
  auto* energy = app.add_subcommand("energy", "operation-count energy estimate");
  std::string family = "celif";
  std::vector<std::string> layer_specs;
  std::string readout_spec;
  size_t timesteps = 784;
  double e_ac = 0.9, e_mac = 4.6;
  bool reference = false;
  energy->add_option("--family", family, "lstm | lif | alif | celif");
  energy->add_option("--layer-spec", layer_specs, "hidden layer as m:n:fr_in:fr_out (repeatable)");
  energy->add_option("--readout", readout_spec, "classifier as m:n:fr_in");
  energy->add_option("--timesteps", timesteps, "sequence length T");
  energy->add_option("--e-ac", e_ac, "energy per accumulate, pJ");
  energy->add_option("--e-mac", e_mac, "energy per multiply-accumulate, pJ");
  energy->add_flag("--reference", reference, "compare the four ~155k-parameter reference models");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a synthetic batch (CSV) or synthetic pixel IDX files");
  ConfigFlags gen_flags;
  gen_flags.attach(gen);
  size_t gen_count = 16;
  gen->add_option("--count", gen_count, "samples (training images for pixel tasks)");

  // inspect-ckpt
  auto* inspect = app.add_subcommand("inspect-ckpt", "print checkpoint header, config and tensor digests");
  std::string inspect_ckpt;
  inspect->add_option("--checkpoint", inspect_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      ConfigPtr cfg = train_flags.build(train);
      check(celif_config_validate(cfg.get()), "invalid configuration");
      celif_train_result r{};
      check(celif_train(cfg.get(), quiet ? 0 : 1, &r), "training failed");
      std::printf("iterations %llu\ntrain_loss %.6g\ntrain_metric %.6g\n", static_cast<unsigned long long>(r.iterations),
                  r.last_loss, r.last_metric);
      if (r.has_eval) std::printf("eval_loss %.6g\neval_metric %.6g\n", r.eval_loss, r.eval_metric);
      std::printf("early_stopped %s\ncheckpoint %s/model.ckpt\n", r.early_stopped ? "true" : "false",
                  config_get(cfg.get(), "out_dir").c_str());
    } else if (*eval || *probe) {
      const std::string& path = *eval ? eval_ckpt : probe_ckpt;
      const auto& sets = *eval ? eval_sets : probe_sets;
      ModelPtr model = load_model(path);
      for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw CliError{2, "--set expects key=value, got '" + kv + "'"};
        check(celif_model_set(model.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set " + kv);
      }
      if (*eval) {
        double loss = 0, metric = 0;
        check(celif_model_evaluate(model.get(), &loss, &metric), "evaluation failed");
        std::printf("loss %.6g\nmetric %.6g\n", loss, metric);
      } else {
        const size_t layer = resolve_layer(model.get(), probe_layer);
        const auto dir = sibling_dir(probe_ckpt, probe_out);
        size_t T = 0;
        check(celif_model_seq_len(model.get(), &T), "reading sequence length");
        std::vector<double> sums(T);
        double raw_total = 0;
        check(celif_probe_gradients(model.get(), layer, dir.string().c_str(), sums.data(), sums.size(), &T, &raw_total),
              "gradient probe failed");
        double early = 0;
        for (size_t t = 0; t < std::min<size_t>(10, T); ++t) early += sums[t];
        std::printf("layer %zu\nsteps %zu\nraw_total %.6g\nmass_first_10_steps %.6g\nwrote %s\n", layer, T, raw_total,
                    early, (dir / "grad_probe.csv").string().c_str());
      }
    } else if (*tesim) {
      ModelPtr model = load_model(te_ckpt);
      const size_t layer = resolve_layer(model.get(), te_layer);
      const auto csv = sibling_dir(te_ckpt, te_out) / "te_similarity.csv";
      std::vector<double> lags(te_lags + 1);
      size_t T = 0;
      check(celif_te_similarity(model.get(), layer, csv.string().c_str(), lags.data(), lags.size(), &T), "te-sim failed");
      std::printf("layer %zu\nsteps %zu\nlag,mean_similarity\n", layer, T);
      for (size_t k = 0; k < lags.size() && k < T; ++k) std::printf("%zu,%.6f\n", k, lags[k]);
      std::printf("wrote %s\n", csv.string().c_str());
    } else if (*energy) {
      if (reference) {
        double lstm = 0, celif = 0;
        std::printf("family,per_step_pj,total_nj(T=%zu),reported_nj\n", timesteps);
        for (size_t i = 0; i < celif_energy_reference_count(); ++i) {
          const char* name = nullptr;
          celif_energy_report r{};
          double reported = 0;
          check(celif_energy_reference(i, timesteps, e_ac, e_mac, &name, &r, &reported), "energy");
          std::printf("%s,%.1f,%.1f,%.1f\n", name, r.per_step_pj, r.total_nj, reported);
          if (std::string(name) == "lstm") lstm = r.per_step_pj;
          if (std::string(name) == "celif") celif = r.per_step_pj;
        }
        std::printf("lstm/celif ratio %.1f\n", lstm / celif);
      } else {
        std::vector<celif_energy_layer> layers;
        for (const auto& s : layer_specs) layers.push_back(parse_layer(s));
        std::optional<celif_energy_layer> readout;
        if (!readout_spec.empty()) readout = parse_layer(readout_spec);
        const auto r = run_energy(family.c_str(), layers, readout ? &*readout : nullptr, timesteps, e_ac, e_mac);
        std::printf("per_step_pj %.6g\nreadout_pj %.6g\ntotal_nj %.6g (per-step cost x %zu timesteps)\n", r.per_step_pj,
                    r.readout_pj, r.total_nj, timesteps);
      }
    } else if (*gen) {
      ConfigPtr cfg = gen_flags.build(gen);
      const std::string out = config_get(cfg.get(), "out_dir");
      check(celif_gen_data(cfg.get(), gen_count, out.c_str()), "gen-data failed");
      std::printf("wrote %s\n", out.c_str());
    } else if (*inspect) {
      size_t needed = 0;
      celif_checkpoint_describe(inspect_ckpt.c_str(), nullptr, 0, &needed);
      if (needed == 0) check(celif_checkpoint_describe(inspect_ckpt.c_str(), nullptr, 0, &needed), "inspect failed");
      std::string text(needed, '\0');
      check(celif_checkpoint_describe(inspect_ckpt.c_str(), text.data(), text.size(), &needed), "inspect failed");
      text.resize(needed - 1);
      std::fputs(text.c_str(), stdout);
    }
  } catch (const CliError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return e.code;
  }
  return 0;
}
