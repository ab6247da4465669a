#include "lll/cli/runconfig.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace lll::cli {

namespace {

struct Field {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
T parse_number(const char* name, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc{} || res.ptr != last)
    throw ConfigError(std::string("config: field '") + name + "' expects a number, got '" + value + "'");
  return out;
}

template <>
double parse_number<double>(const char* name, const std::string& value) {
  try {
    std::size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return out;
  } catch (const std::exception&) {
    throw ConfigError(std::string("config: field '") + name + "' expects a number, got '" + value + "'");
  }
}

bool parse_bool(const char* name, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(std::string("config: field '") + name + "' expects true/false, got '" + value + "'");
}

#define INT_FIELD(member)                                                           \
  Field{#member, [](const RunConfig& c) { return std::to_string(c.member); },       \
        [](RunConfig& c, const std::string& v) { c.member = parse_number<int>(#member, v); }}
#define U64_FIELD(member)                                                           \
  Field{#member, [](const RunConfig& c) { return std::to_string(c.member); },       \
        [](RunConfig& c, const std::string& v) {                                    \
          c.member = parse_number<std::uint64_t>(#member, v);                       \
        }}
#define DBL_FIELD(member)                                                           \
  Field{#member,                                                                    \
        [](const RunConfig& c) {                                                    \
          std::ostringstream os;                                                    \
          os.precision(17);                                                         \
          os << c.member;                                                           \
          return os.str();                                                          \
        },                                                                          \
        [](RunConfig& c, const std::string& v) { c.member = parse_number<double>(#member, v); }}
#define STR_FIELD(member)                                                           \
  Field{#member, [](const RunConfig& c) { return c.member; },                       \
        [](RunConfig& c, const std::string& v) { c.member = v; }}
#define BOOL_FIELD(member)                                                          \
  Field{#member, [](const RunConfig& c) { return c.member ? "true" : "false"; },    \
        [](RunConfig& c, const std::string& v) { c.member = parse_bool(#member, v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      INT_FIELD(d_model),
      INT_FIELD(n_layers),
      INT_FIELD(n_heads),
      INT_FIELD(max_seq_len),
      STR_FIELD(adapter),
      INT_FIELD(adapter_position),
      INT_FIELD(latent_dim),
      DBL_FIELD(alpha),
      DBL_FIELD(rho),
      INT_FIELD(cond_dim),
      STR_FIELD(recon_mode),
      DBL_FIELD(lambda_lm),
      DBL_FIELD(beta_id),
      DBL_FIELD(gamma),
      INT_FIELD(epochs_per_task),
      INT_FIELD(alt_turns),
      STR_FIELD(mode),
      BOOL_FIELD(alt_joint_second_half),
      BOOL_FIELD(use_id_task),
      INT_FIELD(batch_size),
      DBL_FIELD(lr),
      DBL_FIELD(weight_decay),
      STR_FIELD(replay_decode),
      INT_FIELD(eval_max_new),
      INT_FIELD(lr_warmup_steps),
      INT_FIELD(diag_pseudo_count),
      INT_FIELD(train_size),
      INT_FIELD(test_size),
      U64_FIELD(cls_seed),
      U64_FIELD(span_seed),
      U64_FIELD(slot_seed),
      STR_FIELD(order),
      STR_FIELD(data_dir),
      BOOL_FIELD(export_data),
      U64_FIELD(seed),
      STR_FIELD(grid_orders),
      STR_FIELD(grid_gammas),
      STR_FIELD(grid_seeds),
      STR_FIELD(grid_variants),
      STR_FIELD(sweep_axis),
      STR_FIELD(sweep_values),
      INT_FIELD(sweep_repeats),
      INT_FIELD(jobs),
  };
  return table;
}

#undef INT_FIELD
#undef U64_FIELD
#undef DBL_FIELD
#undef STR_FIELD
#undef BOOL_FIELD

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const Field& f : fields()) out.push_back(f.name);
    return out;
  }();
  return names;
}

std::string RunConfig::get(const std::string& key) const {
  for (const Field& f : fields())
    if (key == f.name) return f.get(*this);
  throw ConfigError("config: unknown field '" + key + "'");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.name) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("config: unknown field '" + key + "'");
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot read file " + path);
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: " + path + ":" + std::to_string(lineno) + " expected 'key = value'");
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

void RunConfig::apply_override(const std::string& key_equals_value) {
  const std::size_t eq = key_equals_value.find('=');
  if (eq == std::string::npos)
    throw ConfigError("config: override '" + key_equals_value + "' must look like key=value");
  set(trim(key_equals_value.substr(0, eq)), trim(key_equals_value.substr(eq + 1)));
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const Field& f : fields()) {
    out += f.name;
    out += " = ";
    out += f.get(*this);
    out += '\n';
  }
  return out;
}

std::string RunConfig::digest() const {
  std::uint64_t h = fnv1a64(canonical());
  std::string hex(16, '0');
  for (int i = 15; i >= 0; --i) {
    hex[i] = "0123456789abcdef"[h & 0xf];
    h >>= 4;
  }
  return hex;
}

void RunConfig::validate() const {
  if (adapter != "none" && adapter != "rvae" && adapter != "rcvae")
    throw ConfigError("config: field 'adapter' must be none|rvae|rcvae, got '" + adapter + "'");
  if (replay_decode != "sample" && replay_decode != "greedy")
    throw ConfigError("config: field 'replay_decode' must be sample|greedy, got '" + replay_decode + "'");
  if (train_size < 1 || test_size < 1)
    throw ConfigError("config: fields 'train_size'/'test_size' must be positive");
  if (diag_pseudo_count < 0) throw ConfigError("config: field 'diag_pseudo_count' must be non-negative");
  if (jobs < 0) throw ConfigError("config: field 'jobs' must be non-negative");
  if (sweep_repeats < 1) throw ConfigError("config: field 'sweep_repeats' must be positive");
  try {
    model_config(/*vocab_size=*/1000).validate();
    auto acfg = adapter_config(/*n_tasks=*/3);
    if (acfg) acfg->validate();
    lll_config().validate(has_adapter());
    rvae::recon_mode_from_string(recon_mode);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

tinylm::ModelConfig RunConfig::model_config(int vocab_size) const {
  tinylm::ModelConfig m;
  m.vocab_size = vocab_size;
  m.d_model = d_model;
  m.n_layers = n_layers;
  m.n_heads = n_heads;
  m.max_seq_len = max_seq_len;
  m.adapter_position = has_adapter() ? adapter_position : -1;
  return m;
}

std::optional<rvae::RvaeConfig> RunConfig::adapter_config(int n_tasks) const {
  if (!has_adapter()) return std::nullopt;
  rvae::RvaeConfig a;
  a.d_model = d_model;
  a.latent_dim = latent_dim;
  a.alpha = static_cast<numcore::Real>(alpha);
  a.rho = static_cast<numcore::Real>(rho);
  a.conditional = adapter == "rcvae";
  a.n_conditions = a.conditional ? n_tasks : 0;
  a.cond_dim = cond_dim;
  return a;
}

llltrain::LllConfig RunConfig::lll_config() const {
  llltrain::LllConfig c;
  c.lambda_lm = static_cast<numcore::Real>(lambda_lm);
  c.beta_id = static_cast<numcore::Real>(beta_id);
  c.gamma = static_cast<numcore::Real>(gamma);
  c.epochs_per_task = epochs_per_task;
  c.alt_turns = alt_turns;
  c.mode = llltrain::mode_from_string(mode);
  c.alt_joint_second_half = alt_joint_second_half;
  c.use_id_task = use_id_task;
  c.recon_mode = rvae::recon_mode_from_string(recon_mode);
  c.batch_size = batch_size;
  c.seed = seed;
  c.replay_sample_decode = replay_decode == "sample";
  c.eval_max_new = eval_max_new;
  c.lr_warmup_steps = lr_warmup_steps;
  return c;
}

numcore::AdamWConfig RunConfig::optim_config() const {
  numcore::AdamWConfig o;
  o.lr = static_cast<numcore::Real>(lr);
  o.weight_decay = static_cast<numcore::Real>(weight_decay);
  return o;
}

}  // namespace lll::cli
