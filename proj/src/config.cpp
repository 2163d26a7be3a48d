#include "slotforge/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "slotforge/errors.hpp"

namespace slotforge {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
    return s.substr(1, s.size() - 2);
  return s;
}

std::size_t to_size(const Setting& s) {
  std::size_t v = 0;
  const auto* end = s.second.data() + s.second.size();
  auto [ptr, ec] = std::from_chars(s.second.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw UsageError("config key '" + s.first + "' needs a nonnegative integer, got '" + s.second + "'");
  return v;
}

double to_double(const Setting& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s.second, &used);
    if (used == s.second.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("config key '" + s.first + "' needs a number, got '" + s.second + "'");
}

bool to_bool(const Setting& s) {
  if (s.second == "true" || s.second == "1") return true;
  if (s.second == "false" || s.second == "0") return false;
  throw UsageError("config key '" + s.first + "' needs true|false, got '" + s.second + "'");
}

using Setter = std::function<void(RunConfig&, const Setting&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"heads", [](RunConfig& c, const Setting& s) { c.model.attention.heads = to_size(s); }},
      {"slots", [](RunConfig& c, const Setting& s) { c.model.attention.slots = to_size(s); }},
      {"slot_dim", [](RunConfig& c, const Setting& s) { c.model.attention.slot_dim = to_size(s); }},
      {"iterations",
       [](RunConfig& c, const Setting& s) { c.model.attention.iterations = to_size(s); }},
      {"mlp_hidden",
       [](RunConfig& c, const Setting& s) { c.model.attention.mlp_hidden = to_size(s); }},
      {"epsilon", [](RunConfig& c, const Setting& s) { c.model.attention.epsilon = to_double(s); }},
      {"layer_norm",
       [](RunConfig& c, const Setting& s) { c.model.attention.layer_norm = to_bool(s); }},
      {"decoder_hidden",
       [](RunConfig& c, const Setting& s) { c.model.decoder_hidden = to_size(s); }},
      {"positional",
       [](RunConfig& c, const Setting& s) {
         c.model.positional = parse_positional_encoding(s.second);
       }},
      {"lr_base", [](RunConfig& c, const Setting& s) { c.train.lr_base = to_double(s); }},
      {"warmup_frac", [](RunConfig& c, const Setting& s) { c.train.warmup_frac = to_double(s); }},
      {"decay_rate", [](RunConfig& c, const Setting& s) { c.train.decay_rate = to_double(s); }},
      {"decay_horizon", [](RunConfig& c, const Setting& s) { c.train.decay_horizon = to_size(s); }},
      {"epochs", [](RunConfig& c, const Setting& s) { c.train.epochs = to_size(s); }},
      {"batch_size", [](RunConfig& c, const Setting& s) { c.train.batch_size = to_size(s); }},
      {"max_steps", [](RunConfig& c, const Setting& s) { c.train.max_steps = to_size(s); }},
      {"mask_strategy",
       [](RunConfig& c, const Setting& s) {
         c.train.masking.strategy = parse_mask_strategy(s.second);
       }},
      {"mask_percent",
       [](RunConfig& c, const Setting& s) { c.train.masking.m_percent = to_double(s); }},
      {"head_select",
       [](RunConfig& c, const Setting& s) { c.train.head_select = parse_head_selection(s.second); }},
      {"per_batch_head", [](RunConfig& c, const Setting& s) { c.train.per_batch_head = to_bool(s); }},
      {"fusion_metric",
       [](RunConfig& c, const Setting& s) {
         c.train.fusion_metric = parse_similarity_metric(s.second);
       }},
      {"fusion_matcher",
       [](RunConfig& c, const Setting& s) { c.train.fusion_matcher = parse_matcher(s.second); }},
      {"beta1", [](RunConfig& c, const Setting& s) { c.train.beta1 = to_double(s); }},
      {"beta2", [](RunConfig& c, const Setting& s) { c.train.beta2 = to_double(s); }},
      {"adam_eps", [](RunConfig& c, const Setting& s) { c.train.adam_eps = to_double(s); }},
      {"seed", [](RunConfig& c, const Setting& s) { c.train.seed = to_size(s); }},
      {"threads", [](RunConfig& c, const Setting& s) { c.train.threads = to_size(s); }},
  };
  return table;
}

}  // namespace

std::vector<Setting> parse_settings(const std::string& text, const std::string& origin) {
  std::vector<Setting> out;
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key = value, got '" +
                       line + "'");
    }
    Setting s{trim(line.substr(0, eq)), unquote(trim(line.substr(eq + 1)))};
    if (s.first.empty())
      throw UsageError(origin + ":" + std::to_string(lineno) + ": empty key");
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Setting> read_settings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_settings(buffer.str(), path.string());
}

Setting parse_override(const std::string& text) {
  auto settings = parse_settings(text, "--set");
  if (settings.size() != 1) throw UsageError("--set expects key=value, got '" + text + "'");
  return settings.front();
}

void apply_setting(RunConfig& config, const Setting& setting) {
  const auto& table = setters();
  const auto it = table.find(setting.first);
  if (it == table.end()) throw UsageError("unknown config key '" + setting.first + "'");
  it->second(config, setting);
}

RunConfig load_run_config(const std::filesystem::path* file, const std::vector<Setting>& overrides) {
  RunConfig config;
  if (file != nullptr)
    for (const Setting& s : read_settings(*file)) apply_setting(config, s);
  for (const Setting& s : overrides) apply_setting(config, s);
  config.train.validate();
  return config;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : setters()) keys.push_back(k);
  return keys;
}

std::string dump_run_config(const RunConfig& c) {
  std::ostringstream o;
  o.precision(17);
  const auto& a = c.model.attention;
  const auto& t = c.train;
  o << "heads = " << a.heads << "\nslots = " << a.slots << "\nslot_dim = " << a.slot_dim
    << "\niterations = " << a.iterations << "\nmlp_hidden = " << a.mlp_hidden
    << "\nepsilon = " << a.epsilon << "\nlayer_norm = " << (a.layer_norm ? "true" : "false")
    << "\ndecoder_hidden = " << c.model.decoder_hidden
    << "\npositional = " << to_string(c.model.positional) << "\nlr_base = " << t.lr_base
    << "\nwarmup_frac = " << t.warmup_frac << "\ndecay_rate = " << t.decay_rate
    << "\ndecay_horizon = " << t.decay_horizon << "\nepochs = " << t.epochs
    << "\nbatch_size = " << t.batch_size << "\nmax_steps = " << t.max_steps
    << "\nmask_strategy = " << to_string(t.masking.strategy)
    << "\nmask_percent = " << t.masking.m_percent << "\nhead_select = " << to_string(t.head_select)
    << "\nper_batch_head = " << (t.per_batch_head ? "true" : "false")
    << "\nfusion_metric = " << to_string(t.fusion_metric)
    << "\nfusion_matcher = " << to_string(t.fusion_matcher) << "\nbeta1 = " << t.beta1
    << "\nbeta2 = " << t.beta2 << "\nadam_eps = " << t.adam_eps << "\nseed = " << t.seed
    << "\nthreads = " << t.threads << "\n";
  return o.str();
}

}  // namespace slotforge
