#include "scfnet/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "scfnet/errors.hpp"

namespace scfnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

[[noreturn]] void bad_value(const ConfigEntry& e, const std::string& what) {
  throw ConfigError("line " + std::to_string(e.line) + ": " + e.key + " = '" + e.value + "': expected " + what);
}

template <typename N>
N parse_number(const ConfigEntry& e, const std::string& text) {
  N v{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || text.empty()) bad_value(e, "a number");
  return v;
}

int parse_int(const ConfigEntry& e) { return parse_number<int>(e, e.value); }
double parse_real(const ConfigEntry& e) { return parse_number<double>(e, e.value); }

std::vector<int> parse_int_list(const ConfigEntry& e) {
  std::vector<int> out;
  for (const auto& item : split(e.value, ',')) out.push_back(parse_number<int>(e, item));
  if (out.empty()) bad_value(e, "a comma-separated list");
  return out;
}

template <std::size_t N>
std::array<int, N> parse_int_array(const ConfigEntry& e) {
  const auto v = parse_int_list(e);
  if (v.size() != N) bad_value(e, std::to_string(N) + " comma-separated integers");
  std::array<int, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

std::pair<int, int> parse_size(const ConfigEntry& e) {
  const auto x = e.value.find('x');
  if (x == std::string::npos) bad_value(e, "HxW");
  return {parse_number<int>(e, e.value.substr(0, x)), parse_number<int>(e, e.value.substr(x + 1))};
}

bool parse_bool(const ConfigEntry& e) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  bad_value(e, "true or false");
}

FusionMode parse_fusion(const ConfigEntry& e) {
  if (e.value == "coattention") return FusionMode::CoAttention;
  if (e.value == "add") return FusionMode::Add;
  bad_value(e, "coattention or add");
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

template <std::size_t N>
std::string join(const std::array<int, N>& a) {
  return join(std::vector<int>(a.begin(), a.end()));
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.lr0 = 0.02;
  c.lr_decay_every = 0;
  c.epochs = 4;
  return c;
}

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.batch = 10;
  c.resize_height = 512;
  c.resize_width = 512;
  return c;
}

void TrainConfig::validate_or_throw() const {
  if (!(lr0 >= 0)) throw ConfigError("lr0 must be non-negative");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (resize_height <= 0 || resize_width <= 0) throw ConfigError("resize must be positive");
  if (!(augment_fraction >= 0 && augment_fraction <= 1)) throw ConfigError("augment_fraction must lie in [0, 1]");
  if (quality_levels.empty()) throw ConfigError("quality_levels must not be empty");
  for (int q : quality_levels)
    if (q < 0 || q > 51) throw ConfigError("quality level " + std::to_string(q) + " outside 0..51");
  if (lr_decay_every < 0) throw ConfigError("lr_decay_every must be >= 0");
  if (!(lr_decay_factor > 0)) throw ConfigError("lr_decay_factor must be positive");
}

ConfigText ConfigText::parse(const std::string& text, const std::string& source) {
  ConfigText cfg;
  cfg.source_ = source;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line) + ": expected 'key = value'");
    }
    ConfigEntry e{trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line};
    if (e.key.empty()) throw ConfigError(source + ":" + std::to_string(line) + ": empty key");
    for (const auto& prev : cfg.entries_) {
      if (prev.key == e.key) throw ConfigError(source + ":" + std::to_string(line) + ": duplicate key " + e.key);
    }
    cfg.entries_.push_back(std::move(e));
  }
  return cfg;
}

ConfigText ConfigText::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), path.string());
}

void ConfigText::merge(const ConfigText& other) {
  for (const auto& e : other.entries_) {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const ConfigEntry& x) { return x.key == e.key; });
    if (it == entries_.end()) entries_.push_back(e);
    else *it = e;
  }
}

void ConfigText::apply_to(ModelConfig& cfg) {
  std::vector<ConfigEntry> rest;
  for (const auto& e : entries_) {
    const auto& k = e.key;
    if (k == "stem_channels") cfg.backbone.stem_channels = parse_int(e);
    else if (k == "stage_channels") cfg.backbone.stage_channels = parse_int_array<4>(e);
    else if (k == "blocks_per_stage") cfg.backbone.blocks_per_stage = parse_int_array<4>(e);
    else if (k == "decoder_dim") cfg.decoder_dim = parse_int(e);
    else if (k == "input") std::tie(cfg.height, cfg.width) = parse_size(e);
    else if (k == "pcm") cfg.fusion.pcm = parse_fusion(e);
    else if (k == "ccm") cfg.fusion.ccm = parse_fusion(e);
    else if (k == "gac") {
      if (e.value == "on") cfg.fusion.gac = GacMode::On;
      else if (e.value == "add") cfg.fusion.gac = GacMode::Add;
      else bad_value(e, "on or add");
    } else if (k == "sharing") {
      if (e.value == "shared") cfg.sharing = Sharing::Shared;
      else if (e.value == "independent") cfg.sharing = Sharing::Independent;
      else bad_value(e, "shared or independent");
    } else if (k == "gate_ratio") cfg.gate_ratio = parse_int(e);
    else if (k == "gate_kernel") cfg.gate_kernel = parse_int(e);
    else if (k == "pcm_reduction") cfg.pcm_reduction = parse_int(e);
    else rest.push_back(e);
  }
  entries_ = std::move(rest);
}

void ConfigText::apply_to(TrainConfig& cfg) {
  std::vector<ConfigEntry> rest;
  for (const auto& e : entries_) {
    const auto& k = e.key;
    if (k == "lr0") cfg.lr0 = parse_real(e);
    else if (k == "momentum") cfg.momentum = parse_real(e);
    else if (k == "weight_decay") cfg.weight_decay = parse_real(e);
    else if (k == "epochs") cfg.epochs = parse_int(e);
    else if (k == "batch") cfg.batch = parse_int(e);
    else if (k == "resize") std::tie(cfg.resize_height, cfg.resize_width) = parse_size(e);
    else if (k == "augment_fraction") cfg.augment_fraction = parse_real(e);
    else if (k == "quality_levels") cfg.quality_levels = parse_int_list(e);
    else if (k == "seed") cfg.seed = parse_number<std::uint64_t>(e, e.value);
    else if (k == "lr_decay_every") cfg.lr_decay_every = parse_int(e);
    else if (k == "lr_decay_factor") cfg.lr_decay_factor = parse_real(e);
    else if (k == "max_steps") cfg.max_steps = parse_number<std::uint64_t>(e, e.value);
    else if (k == "validate") cfg.validate = parse_bool(e);
    else rest.push_back(e);
  }
  entries_ = std::move(rest);
}

void ConfigText::expect_consumed() const {
  if (!entries_.empty()) {
    const auto& e = entries_.front();
    throw ConfigError(source_ + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "'");
  }
}

std::string to_config_text(const ModelConfig& cfg) {
  std::ostringstream o;
  o << "stem_channels = " << cfg.backbone.stem_channels << '\n'
    << "stage_channels = " << join(cfg.backbone.stage_channels) << '\n'
    << "blocks_per_stage = " << join(cfg.backbone.blocks_per_stage) << '\n'
    << "decoder_dim = " << cfg.decoder_dim << '\n'
    << "input = " << cfg.height << 'x' << cfg.width << '\n'
    << "pcm = " << (cfg.fusion.pcm == FusionMode::CoAttention ? "coattention" : "add") << '\n'
    << "ccm = " << (cfg.fusion.ccm == FusionMode::CoAttention ? "coattention" : "add") << '\n'
    << "gac = " << (cfg.fusion.gac == GacMode::On ? "on" : "add") << '\n'
    << "sharing = " << (cfg.sharing == Sharing::Shared ? "shared" : "independent") << '\n'
    << "gate_ratio = " << cfg.gate_ratio << '\n'
    << "gate_kernel = " << cfg.gate_kernel << '\n'
    << "pcm_reduction = " << cfg.pcm_reduction << '\n';
  return o.str();
}

std::string to_config_text(const TrainConfig& cfg) {
  std::ostringstream o;
  o << "lr0 = " << format_double(cfg.lr0) << '\n'
    << "momentum = " << format_double(cfg.momentum) << '\n'
    << "weight_decay = " << format_double(cfg.weight_decay) << '\n'
    << "epochs = " << cfg.epochs << '\n'
    << "batch = " << cfg.batch << '\n'
    << "resize = " << cfg.resize_height << 'x' << cfg.resize_width << '\n'
    << "augment_fraction = " << format_double(cfg.augment_fraction) << '\n'
    << "quality_levels = " << join(cfg.quality_levels) << '\n'
    << "seed = " << cfg.seed << '\n'
    << "lr_decay_every = " << cfg.lr_decay_every << '\n'
    << "lr_decay_factor = " << format_double(cfg.lr_decay_factor) << '\n'
    << "max_steps = " << cfg.max_steps << '\n'
    << "validate = " << (cfg.validate ? "true" : "false") << '\n';
  return o.str();
}

ModelConfig parse_model_config(const std::string& text) {
  auto kv = ConfigText::parse(text, "<model config>");
  ModelConfig cfg;
  kv.apply_to(cfg);
  kv.expect_consumed();
  cfg.validate();
  return cfg;
}

TrainConfig parse_train_config(const std::string& text) {
  auto kv = ConfigText::parse(text, "<train config>");
  TrainConfig cfg;
  kv.apply_to(cfg);
  kv.expect_consumed();
  cfg.validate_or_throw();
  return cfg;
}

}  // namespace scfnet
