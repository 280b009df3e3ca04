// Command bodies behind the CLI: each is a pure function of (config, input
// files, seed) writing deterministic artifacts. The thin CLI11 wrapper in
// tools/ parses flags and maps errors to exit codes.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "snm/config.hpp"

namespace snm {

struct MakeMaskArgs {
  std::int64_t h = 240;
  std::int64_t w = 240;
  double rate = 0.2;
  double center = 0.08;
  std::uint64_t seed = 0;
  std::string out;
};

// Writes the mask container and returns the achieved sampling rate.
double cmd_make_mask(const MakeMaskArgs& args);

void cmd_gen_phantoms(const ExperimentConfig& cfg, const std::string& out_path);

void cmd_pretrain_mrn(const ExperimentConfig& cfg, const std::string& data_path,
                      const std::string& out_dir);
void cmd_pretrain_msn(const ExperimentConfig& cfg, const std::string& data_path,
                      const std::string& out_dir);
void cmd_finetune(const ExperimentConfig& cfg, const std::string& data_path,
                  const std::string& mrn_ckpt, const std::string& msn_ckpt,
                  const std::string& out_dir, bool recon_only);

void cmd_reconstruct(const ExperimentConfig& cfg, const std::string& ckpt_path,
                     const std::string& data_path, const std::string& out_path);
void cmd_segment(const ExperimentConfig& cfg, const std::string& ckpt_path,
                 const std::string& data_path, const std::string& out_path);

// Evaluates checkpoints (and/or a precomputed prediction volume) against the
// test split of `data_path`, writing metrics.csv, table.txt and the
// metric-vs-blocks plots. Returns the rendered table.
std::string cmd_evaluate(const ExperimentConfig& cfg, const std::string& data_path,
                         const std::vector<std::string>& checkpoint_paths,
                         const std::optional<std::string>& pred_path,
                         const std::optional<std::string>& msn_companion,
                         const std::string& out_dir);

// Shared dataset plumbing (exposed for tests and the acceptance suite).
std::vector<LabeledSample> dataset_from_config(const ExperimentConfig& cfg);
DatasetSplit split_from_config(const ExperimentConfig& cfg, std::vector<LabeledSample> samples);

}  // namespace snm
