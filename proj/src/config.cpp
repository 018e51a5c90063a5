#include "celif/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "celif/error.hpp"

namespace celif {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest form that round-trips.
  for (int prec = 1; prec < 17; ++prec) {
    char shortbuf[32];
    std::snprintf(shortbuf, sizeof shortbuf, "%.*g", prec, v);
    if (std::strtod(shortbuf, nullptr) == v) return shortbuf;
  }
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0') throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  return x;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  int base = 10;
  std::string_view sv = v;
  if (sv.size() > 2 && sv[0] == '0' && (sv[1] == 'x' || sv[1] == 'X')) {
    base = 16;
    sv.remove_prefix(2);
  }
  auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), x, base);
  if (ec != std::errc() || ptr != sv.data() + sv.size() || sv.empty())
    throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::size_t> parse_dims(const std::string& key, const std::string& v) {
  std::vector<std::size_t> dims;
  std::string cleaned;
  for (char c : v)
    if (c != '[' && c != ']' && c != ' ') cleaned += c;
  std::stringstream ss(cleaned);
  std::string item;
  while (std::getline(ss, item, ',')) dims.push_back(parse_u64(key, item));
  if (dims.empty()) throw ConfigError("config key '" + key + "' needs a comma-separated list");
  return dims;
}

std::string fmt_dims(const std::vector<std::size_t>& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) out += (i ? "," : "") + std::to_string(dims[i]);
  return out;
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define CELIF_SIZE(field)                                                                                 \
  Key {                                                                                                   \
    #field, [](RunConfig& c, const std::string& v) { c.field = static_cast<std::size_t>(parse_u64(#field, v)); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                                       \
  }
#define CELIF_REAL(field)                                                                            \
  Key {                                                                                              \
    #field, [](RunConfig& c, const std::string& v) { c.field = parse_double(#field, v); },           \
        [](const RunConfig& c) { return fmt_double(c.field); }                                       \
  }
#define CELIF_OPT_REAL(field, none)                                                                        \
  Key {                                                                                                    \
    #field,                                                                                                \
        [](RunConfig& c, const std::string& v) {                                                           \
          if (v == none) c.field.reset(); else c.field = parse_double(#field, v);                          \
        },                                                                                                 \
        [](const RunConfig& c) { return c.field ? fmt_double(*c.field) : std::string(none); }              \
  }
#define CELIF_TEXT(field)                                                                   \
  Key {                                                                                     \
    #field, [](RunConfig& c, const std::string& v) { c.field = v; },                        \
        [](const RunConfig& c) { return c.field; }                                          \
  }

const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = {
      Key{"task", [](RunConfig& c, const std::string& v) { c.task = task_kind_from_string(v); },
          [](const RunConfig& c) { return to_string(c.task); }},
      CELIF_SIZE(seq_len),
      Key{"hidden", [](RunConfig& c, const std::string& v) { c.hidden = parse_dims("hidden", v); },
          [](const RunConfig& c) { return fmt_dims(c.hidden); }},
      Key{"neuron", [](RunConfig& c, const std::string& v) { c.neuron = neuron_kind_from_string(v); },
          [](const RunConfig& c) { return to_string(c.neuron); }},
      Key{"variant", [](RunConfig& c, const std::string& v) { c.variant = static_cast<int>(parse_u64("variant", v)); },
          [](const RunConfig& c) { return std::to_string(c.variant); }},
      Key{"connectivity", [](RunConfig& c, const std::string& v) { c.connectivity = connectivity_from_string(v); },
          [](const RunConfig& c) { return to_string(c.connectivity); }},
      Key{"te_sharing", [](RunConfig& c, const std::string& v) { c.te_sharing = te_sharing_from_string(v); },
          [](const RunConfig& c) { return to_string(c.te_sharing); }},
      Key{"readout",
          [](RunConfig& c, const std::string& v) {
            if (v == "auto") c.readout.reset(); else c.readout = readout_from_string(v);
          },
          [](const RunConfig& c) { return c.readout ? to_string(*c.readout) : std::string("auto"); }},
      CELIF_REAL(alpha),
      CELIF_OPT_REAL(beta, "auto"),
      CELIF_REAL(gamma),
      CELIF_REAL(theta0),
      CELIF_REAL(gamma_sg),
      CELIF_REAL(te_mean),
      CELIF_REAL(te_std),
      CELIF_OPT_REAL(lr, "auto"),
      CELIF_REAL(adam_beta1),
      CELIF_REAL(adam_beta2),
      CELIF_REAL(adam_eps),
      CELIF_REAL(clip_norm),
      CELIF_SIZE(batch_size),
      CELIF_SIZE(iterations),
      CELIF_SIZE(epochs),
      CELIF_SIZE(eval_interval),
      CELIF_SIZE(eval_batch),
      CELIF_SIZE(log_interval),
      CELIF_SIZE(checkpoint_interval),
      CELIF_OPT_REAL(target_loss, "none"),
      CELIF_OPT_REAL(target_metric, "none"),
      Key{"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
          [](const RunConfig& c) { return std::to_string(c.seed); }},
      CELIF_TEXT(out_dir),
      CELIF_TEXT(data_root),
      CELIF_SIZE(image_side),
      CELIF_SIZE(train_limit),
      CELIF_SIZE(test_limit),
      Key{"permutation_seed",
          [](RunConfig& c, const std::string& v) { c.permutation_seed = parse_u64("permutation_seed", v); },
          [](const RunConfig& c) { return std::to_string(c.permutation_seed); }},
      CELIF_SIZE(probe_batch),
      Key{"wall_clock", [](RunConfig& c, const std::string& v) { c.wall_clock = parse_bool("wall_clock", v); },
          [](const RunConfig& c) { return std::string(c.wall_clock ? "true" : "false"); }},
      CELIF_TEXT(resume),
  };
  return keys;
}

#undef CELIF_SIZE
#undef CELIF_REAL
#undef CELIF_OPT_REAL
#undef CELIF_TEXT

const Key& find_key(const std::string& key) {
  for (const auto& k : key_table())
    if (key == k.name) return k;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  find_key(trim(key)).set(config, trim(value));
}

std::string config_value(const RunConfig& config, const std::string& key) { return find_key(key).get(config); }

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.emplace_back(k.name);
  return out;
}

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    try {
      apply_setting(config, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_text(const RunConfig& config) {
  std::string out;
  for (const auto& k : key_table()) out += std::string(k.name) + " = " + k.get(config) + "\n";
  return out;
}

std::size_t model_seq_len(const RunConfig& c) {
  switch (c.task) {
    case TaskKind::Adding: return c.seq_len;
    case TaskKind::CopyMemory: return c.seq_len + 2 * kCopyKeyLength;
    case TaskKind::SeqMnist:
    case TaskKind::PsMnist: return c.image_side * c.image_side;
  }
  return c.seq_len;
}

ModelSpec model_spec(const RunConfig& c) {
  ModelSpec spec;
  spec.seq_len = model_seq_len(c);
  spec.hidden_dims = c.hidden;
  spec.connectivity = c.connectivity;
  spec.te_sharing = c.te_sharing;
  switch (c.task) {
    case TaskKind::Adding:
      spec.input_dim = 2;
      spec.output_dim = 1;
      spec.readout = Readout::LastStep;
      break;
    case TaskKind::CopyMemory:
      spec.input_dim = kCopySymbols;
      spec.output_dim = kCopySymbols;
      spec.readout = Readout::PerStep;
      break;
    case TaskKind::SeqMnist:
    case TaskKind::PsMnist:
      spec.input_dim = 1;
      spec.output_dim = 10;
      spec.readout = Readout::MeanLogit;
      break;
  }
  if (c.readout) spec.readout = *c.readout;

  NeuronConfig& n = spec.neuron;
  n.kind = c.neuron;
  n.variant = ce_variant_from_int(c.variant);
  n.alpha = c.alpha;
  n.beta = c.beta ? *c.beta
                  : (c.task == TaskKind::CopyMemory ? 1.0 - 1.0 / static_cast<double>(c.seq_len) : 0.99);
  n.gamma = c.gamma;
  n.theta0 = c.theta0;
  n.gamma_sg = c.gamma_sg;
  return spec;
}

AdamConfig adam_config(const RunConfig& c) {
  AdamConfig a;
  a.learning_rate = c.lr ? *c.lr : (c.task == TaskKind::CopyMemory ? 1e-3 : 5e-4);
  a.beta1 = c.adam_beta1;
  a.beta2 = c.adam_beta2;
  a.epsilon = c.adam_eps;
  return a;
}

std::filesystem::path data_root(const RunConfig& c) {
  if (!c.data_root.empty()) return c.data_root;
  if (const char* env = std::getenv("CELIF_DATA_ROOT")) return env;
  return {};
}

void validate(const RunConfig& c) {
  if (c.task == TaskKind::Adding && c.seq_len < 2) throw ConfigError("adding problem needs seq_len >= 2");
  if (c.task == TaskKind::CopyMemory && c.seq_len < 1) throw ConfigError("copy memory needs seq_len >= 1");
  if ((c.task == TaskKind::SeqMnist || c.task == TaskKind::PsMnist) && (c.image_side == 0 || c.image_side > 28))
    throw ConfigError("image_side must lie in 1..28");
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (c.eval_batch == 0) throw ConfigError("eval_batch must be positive");
  if (c.probe_batch == 0) throw ConfigError("probe_batch must be positive");
  if (c.log_interval == 0) throw ConfigError("log_interval must be positive");
  if (c.eval_interval == 0) throw ConfigError("eval_interval must be positive");
  if (!(c.te_std >= 0)) throw ConfigError("te_std must be >= 0");
  if (!(c.clip_norm >= 0)) throw ConfigError("clip_norm must be >= 0");
  if (c.out_dir.empty()) throw ConfigError("out_dir must be set");
  const AdamConfig a = adam_config(c);
  if (!(a.learning_rate > 0)) throw ConfigError("lr must be positive");
  if (!(a.beta1 >= 0 && a.beta1 < 1) || !(a.beta2 >= 0 && a.beta2 < 1)) throw ConfigError("Adam betas must lie in [0,1)");
  if (!(a.epsilon > 0)) throw ConfigError("adam_eps must be positive");
  model_spec(c).validate();
}

}  // namespace celif
