// Flat key=value experiment configuration with a fixed key registry:
// unknown keys are rejected, missing keys fall back to documented defaults.
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "snm/training.hpp"

namespace snm {

class ExperimentConfig {
 public:
  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig from_string(const std::string& text);

  // Known-key registry with default values (as strings).
  static const std::map<std::string, std::string>& defaults();

  void set(const std::string& key, const std::string& value);  // validates the key
  bool is_set(const std::string& key) const;

  std::string get_str(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_seed(const std::string& key) const;

  // The effective configuration (defaults overlaid with explicit values),
  // suitable for echoing into a run directory.
  std::string render() const;

 private:
  std::map<std::string, std::string> values_;
};

// Maps the config's train.*/model.*/mask.* keys onto a TrainConfig for one
// phase, applying the per-phase iteration/batch defaults where unset.
TrainConfig make_train_config(const ExperimentConfig& cfg, Phase phase);

}  // namespace snm
