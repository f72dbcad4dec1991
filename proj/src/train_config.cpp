#include "verbdiff/train_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace verbdiff {

std::string to_string(GradientMode mode) {
  return mode == GradientMode::one_step ? "one_step" : "last_steps";
}

GradientMode parse_gradient_mode(const std::string& text) {
  if (text == "one_step") return GradientMode::one_step;
  if (text == "last_steps") return GradientMode::last_steps;
  throw ConfigError("unknown gradient mode '" + text + "' (one_step | last_steps)");
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw ConfigError("cannot format number");
  std::string s(buf, end);
  // Keep floats recognisable as floats.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  return out;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config key '" + key + "' expects true or false, got '" + v + "'");
}

struct Field {
  const char* name;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

#define VD_DOUBLE(member)                                                            \
  Field{#member, [](const TrainConfig& c) { return format_double(c.member); },       \
        [](TrainConfig& c, const std::string& v) { c.member = parse_double(#member, v); }}
#define VD_INT(member)                                                                   \
  Field{#member, [](const TrainConfig& c) { return std::to_string(c.member); },          \
        [](TrainConfig& c, const std::string& v) {                                       \
          c.member = parse_int<decltype(c.member)>(#member, v);                          \
        }}
#define VD_BOOL(member)                                                              \
  Field{#member, [](const TrainConfig& c) { return std::string(c.member ? "true" : "false"); }, \
        [](TrainConfig& c, const std::string& v) { c.member = parse_bool(#member, v); }}
#define VD_STRING(member)                                                            \
  Field{#member, [](const TrainConfig& c) { return quote(c.member); },               \
        [](TrainConfig& c, const std::string& v) { c.member = v; }}
#define VD_ENUM(member, parse)                                                       \
  Field{#member, [](const TrainConfig& c) { return quote(to_string(c.member)); },    \
        [](TrainConfig& c, const std::string& v) { c.member = parse(v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      VD_DOUBLE(lambda_rec),
      VD_DOUBLE(lambda_rdg),
      VD_DOUBLE(lambda_idg),
      VD_DOUBLE(margin),
      VD_DOUBLE(learning_rate),
      VD_DOUBLE(adam_beta1),
      VD_DOUBLE(adam_beta2),
      VD_DOUBLE(adam_epsilon),
      VD_INT(batch_size),
      VD_INT(epochs),
      VD_INT(max_steps),
      VD_INT(train_sampling_steps),
      VD_INT(inference_steps),
      VD_ENUM(balance_mode, parse_balance_mode),
      VD_ENUM(triplet_sign, parse_triplet_sign),
      VD_DOUBLE(region_exponent),
      VD_INT(attention_resolution),
      VD_DOUBLE(min_extent),
      VD_ENUM(gradient_mode, parse_gradient_mode),
      VD_INT(grad_tail_steps),
      VD_INT(gen_every),
      VD_BOOL(log_generation),
      VD_BOOL(log_wall_time),
      VD_INT(checkpoint_every),
      VD_INT(seed),
      VD_STRING(backend),
      VD_STRING(external_backend),
      VD_INT(latent_size),
      VD_INT(feature_dim),
      VD_DOUBLE(guidance_scale),
      VD_STRING(data_dir),
      VD_STRING(image_dir),
  };
  return table;
}

#undef VD_DOUBLE
#undef VD_INT
#undef VD_BOOL
#undef VD_STRING
#undef VD_ENUM

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Strips a trailing comment and unquotes a string value.
std::string parse_value(const std::string& raw, std::size_t line) {
  std::string v = trim(raw);
  if (!v.empty() && v.front() == '"') {
    std::string out;
    std::size_t i = 1;
    for (; i < v.size() && v[i] != '"'; ++i) {
      if (v[i] == '\\' && i + 1 < v.size()) ++i;
      out += v[i];
    }
    if (i >= v.size()) throw ConfigError("line " + std::to_string(line) + ": unterminated string");
    const std::string rest = trim(v.substr(i + 1));
    if (!rest.empty() && rest.front() != '#')
      throw ConfigError("line " + std::to_string(line) + ": trailing text after string");
    return out;
  }
  if (auto hash = v.find('#'); hash != std::string::npos) v = trim(v.substr(0, hash));
  return v;
}

}  // namespace

BackendOptions TrainConfig::backend_options() const {
  BackendOptions o;
  o.name = backend;
  o.external_name = external_backend;
  o.seed = seed;
  o.latent_size = latent_size;
  o.feature_dim = feature_dim;
  o.guidance_scale = guidance_scale;
  return o;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid config: " + what); };
  if (lambda_rec < 0 || lambda_rdg < 0 || lambda_idg < 0) fail("loss weights must be >= 0");
  if (margin < 0) fail("margin must be >= 0");
  if (!(learning_rate > 0)) fail("learning_rate must be > 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (max_steps < 0) fail("max_steps must be >= 0");
  if (train_sampling_steps < 1 || inference_steps < 1) fail("sampling steps must be >= 1");
  if (region_exponent != 1.0 && region_exponent != 2.0) fail("region_exponent must be 1 or 2");
  if (attention_resolution < 1) fail("attention_resolution must be >= 1");
  if (!(min_extent > 0)) fail("min_extent must be > 0");
  if (grad_tail_steps < 1 || grad_tail_steps > train_sampling_steps)
    fail("grad_tail_steps must be in [1, train_sampling_steps]");
  if (gen_every < 1) fail("gen_every must be >= 1");
  if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
  if (latent_size < 4 || feature_dim < 1) fail("model dimensions too small");
}

std::string TrainConfig::model_hash() const {
  std::ostringstream key;
  key << backend << '|' << external_backend << '|' << seed << '|' << latent_size << '|'
      << feature_dim;
  return hex64(fnv1a64(key.str()));
}

std::string TrainConfig::to_toml() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.name) + " = " + f.get(*this) + "\n";
  return out;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.name) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string TrainConfig::get(const std::string& key) const {
  for (const auto& f : fields()) {
    if (key != f.name) continue;
    std::string v = f.get(*this);
    return v.size() >= 2 && v.front() == '"' ? parse_value(v, 0) : v;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> TrainConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.name);
  return out;
}

TrainConfig TrainConfig::from_toml(const std::string& text) {
  TrainConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(n) + ": duplicate key '" + key + "'");
    config.set(key, parse_value(t.substr(eq + 1), n));
  }
  return config;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_toml(buf.str());
}

void TrainConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_toml();
}

}  // namespace verbdiff
