#include "snm/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace snm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::map<std::string, std::string>& ExperimentConfig::defaults() {
  static const std::map<std::string, std::string> kDefaults = {
      // dataset
      {"data.height", "64"},
      {"data.width", "64"},
      {"data.count", "32"},
      {"data.seed", "0"},
      {"data.test_count", "8"},
      {"data.volume", ""},  // optional path to a real volume file
      // undersampling mask
      {"mask.rate", "0.2"},
      {"mask.center_fraction", "0.08"},
      {"mask.seed", "0"},
      {"mask.resample", "false"},
      // architecture
      {"model.depth", "3"},
      {"model.base_channels", "32"},
      {"model.channel_growth", "2"},
      {"model.convs_per_level", "2"},
      {"model.blocks", "5"},
      {"model.classes", "4"},
      // training (iterations/batch default per phase when left at -1)
      {"train.iterations", "-1"},
      {"train.batch_size", "-1"},
      {"train.patch_size", "64"},
      {"train.learning_rate", "0.0005"},
      {"train.beta1", "0.9"},
      {"train.beta2", "0.999"},
      {"train.lambda", "0.01"},
      {"train.seed", "0"},
      {"train.augment", "true"},
      {"train.log_every", "10"},
      {"train.checkpoint_every", "0"},
      {"train.monotone_guard", "false"},
      {"train.guard_tol", "0.25"},
      // evaluation
      {"eval.spacing", "1.0"},
  };
  return kDefaults;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (defaults().find(key) == defaults().end())
    throw config_error("unknown configuration key '" + key + "'");
  values_[key] = value;
}

bool ExperimentConfig::is_set(const std::string& key) const {
  return values_.find(key) != values_.end();
}

ExperimentConfig ExperimentConfig::from_string(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(line_no) + " is not key=value: '" + line + "'");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_string(ss.str());
}

std::string ExperimentConfig::get_str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  const auto d = defaults().find(key);
  if (d == defaults().end()) throw config_error("unknown configuration key '" + key + "'");
  return d->second;
}

std::int64_t ExperimentConfig::get_int(const std::string& key) const {
  const auto s = get_str(key);
  try {
    std::size_t pos = 0;
    const std::int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw config_error("key '" + key + "' is not an integer: '" + s + "'");
  }
}

double ExperimentConfig::get_double(const std::string& key) const {
  const auto s = get_str(key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw config_error("key '" + key + "' is not a number: '" + s + "'");
  }
}

bool ExperimentConfig::get_bool(const std::string& key) const {
  const auto s = get_str(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw config_error("key '" + key + "' is not a boolean: '" + s + "'");
}

std::uint64_t ExperimentConfig::get_seed(const std::string& key) const {
  const auto v = get_int(key);
  if (v < 0) throw config_error("key '" + key + "' must be a nonnegative seed");
  return static_cast<std::uint64_t>(v);
}

std::string ExperimentConfig::render() const {
  std::ostringstream os;
  for (const auto& [key, def] : defaults()) {
    const auto it = values_.find(key);
    os << key << " = " << (it != values_.end() ? it->second : def) << "\n";
  }
  return os.str();
}

TrainConfig make_train_config(const ExperimentConfig& cfg, Phase phase) {
  TrainConfig t = default_train_config(phase);
  if (cfg.get_int("train.iterations") >= 0)
    t.iterations = static_cast<int>(cfg.get_int("train.iterations"));
  if (cfg.get_int("train.batch_size") >= 0)
    t.batch_size = static_cast<int>(cfg.get_int("train.batch_size"));
  t.patch_size = static_cast<int>(cfg.get_int("train.patch_size"));
  t.learning_rate = cfg.get_double("train.learning_rate");
  t.beta1 = cfg.get_double("train.beta1");
  t.beta2 = cfg.get_double("train.beta2");
  t.lambda = cfg.get_double("train.lambda");
  t.seed = cfg.get_seed("train.seed");
  t.augment = cfg.get_bool("train.augment");
  t.log_every = static_cast<int>(cfg.get_int("train.log_every"));
  t.checkpoint_every = static_cast<int>(cfg.get_int("train.checkpoint_every"));
  t.monotone_guard = cfg.get_bool("train.monotone_guard");
  t.guard_tol = cfg.get_double("train.guard_tol");
  t.mask_rate = cfg.get_double("mask.rate");
  t.mask_center = cfg.get_double("mask.center_fraction");
  t.mask_seed = cfg.get_seed("mask.seed");
  t.mask_resample = cfg.get_bool("mask.resample");
  t.blocks = static_cast<int>(cfg.get_int("model.blocks"));
  t.depth = static_cast<int>(cfg.get_int("model.depth"));
  t.base_channels = static_cast<int>(cfg.get_int("model.base_channels"));
  t.channel_growth = static_cast<int>(cfg.get_int("model.channel_growth"));
  t.convs_per_level = static_cast<int>(cfg.get_int("model.convs_per_level"));
  t.classes = static_cast<int>(cfg.get_int("model.classes"));
  return t;
}

}  // namespace snm
