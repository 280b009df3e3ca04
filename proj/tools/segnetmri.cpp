// segnetmri: joint compressed-sensing MRI reconstruction and segmentation.
//
// Subcommands cover the full experiment cycle: phantom generation, mask
// construction, the three training phases, reconstruction/segmentation of
// volumes, and metric evaluation with report/plot emission.
#include <CLI11.hpp>

#include <cstdio>
#include <exception>

#include "snm/commands.hpp"

namespace {

snm::ExperimentConfig load_config(const std::string& path,
                                  const std::vector<std::string>& overrides) {
  auto cfg = path.empty() ? snm::ExperimentConfig{} : snm::ExperimentConfig::load(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw snm::config_error("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint CS-MRI reconstruction and segmentation"};
  app.require_subcommand(1);
  app.fallthrough();  // --config/--set may follow the subcommand

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "experiment configuration file (key = value lines)");
  app.add_option("--set", overrides, "override a config key, e.g. --set train.iterations=100");

  snm::MakeMaskArgs mask_args;
  auto* make_mask = app.add_subcommand("make-mask", "write a Cartesian undersampling mask");
  make_mask->add_option("--height", mask_args.h, "rows")->capture_default_str();
  make_mask->add_option("--width", mask_args.w, "columns")->capture_default_str();
  make_mask->add_option("--rate", mask_args.rate, "sampling rate in (0,1]")->capture_default_str();
  make_mask->add_option("--center", mask_args.center, "fully sampled center fraction")
      ->capture_default_str();
  make_mask->add_option("--seed", mask_args.seed, "mask seed")->capture_default_str();
  make_mask->add_option("--out", mask_args.out, "output container path")->required();

  std::string data_path, out_path, out_dir, mrn_path, msn_path, ckpt_path;
  std::vector<std::string> checkpoints;
  std::string pred_path, companion_path;
  bool recon_only = false;

  auto* gen = app.add_subcommand("gen-phantoms", "generate a labeled phantom volume");
  gen->add_option("--out", out_path, "output volume path")->required();

  auto* pre_mrn = app.add_subcommand("pretrain-mrn", "pre-train the reconstruction network");
  pre_mrn->add_option("--data", data_path, "volume file")->required();
  pre_mrn->add_option("--out-dir", out_dir, "run directory")->required();

  auto* pre_msn = app.add_subcommand("pretrain-msn", "pre-train the segmentation network");
  pre_msn->add_option("--data", data_path, "volume file")->required();
  pre_msn->add_option("--out-dir", out_dir, "run directory")->required();

  auto* fine = app.add_subcommand("finetune", "fine-tune the fused SegNetMRI");
  fine->add_option("--data", data_path, "volume file")->required();
  fine->add_option("--mrn", mrn_path, "pre-trained MRN checkpoint")->required();
  fine->add_option("--msn", msn_path, "pre-trained MSN checkpoint")->required();
  fine->add_option("--out-dir", out_dir, "run directory")->required();
  fine->add_flag("--recon-only", recon_only,
                 "freeze segmentation and fine-tune only the reconstruction network");

  auto* rec = app.add_subcommand("reconstruct", "reconstruct a volume from simulated measurements");
  rec->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  rec->add_option("--data", data_path, "volume file")->required();
  rec->add_option("--out", out_path, "output container path")->required();

  auto* seg = app.add_subcommand("segment", "segment a volume");
  seg->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  seg->add_option("--data", data_path, "volume file")->required();
  seg->add_option("--out", out_path, "output container path")->required();

  auto* eval = app.add_subcommand("evaluate", "evaluate checkpoints on the test split");
  eval->add_option("--data", data_path, "volume file")->required();
  eval->add_option("--checkpoint", checkpoints, "checkpoint path (repeatable)");
  eval->add_option("--pred", pred_path, "precomputed prediction volume to score");
  eval->add_option("--msn", companion_path,
                   "MSN checkpoint used to segment MRN reconstructions (pipeline rows)");
  eval->add_option("--out-dir", out_dir, "report directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = load_config(config_path, overrides);
    if (make_mask->parsed()) {
      snm::cmd_make_mask(mask_args);
    } else if (gen->parsed()) {
      snm::cmd_gen_phantoms(cfg, out_path);
    } else if (pre_mrn->parsed()) {
      snm::cmd_pretrain_mrn(cfg, data_path, out_dir);
    } else if (pre_msn->parsed()) {
      snm::cmd_pretrain_msn(cfg, data_path, out_dir);
    } else if (fine->parsed()) {
      snm::cmd_finetune(cfg, data_path, mrn_path, msn_path, out_dir, recon_only);
    } else if (rec->parsed()) {
      snm::cmd_reconstruct(cfg, ckpt_path, data_path, out_path);
    } else if (seg->parsed()) {
      snm::cmd_segment(cfg, ckpt_path, data_path, out_path);
    } else if (eval->parsed()) {
      snm::cmd_evaluate(cfg, data_path, checkpoints,
                        pred_path.empty() ? std::nullopt : std::make_optional(pred_path),
                        companion_path.empty() ? std::nullopt : std::make_optional(companion_path),
                        out_dir);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
